#pragma once

namespace chanalloc {

// Every OpenMP kernel in this project partitions its work into fixed slots
// and reduces the slots in fixed order, so the parallel path is bitwise
// identical to the serial reference regardless of thread count. The serial
// path is kept callable for tests and the benchmark tool.
enum class Exec { serial, parallel };

}  // namespace chanalloc
