#pragma once

namespace epiline {

/// Selects between the OpenMP kernel and the plain serial reference of an operation.
/// Both must produce identical results; the serial path exists for testing and benchmarks.
enum class Exec { serial, parallel };

}  // namespace epiline
