#pragma once

namespace swarmdiff {

/// Selects between the OpenMP kernel and its serial reference. Both paths
/// produce bit-identical results; the serial one is kept for tests and for
/// single-threaded determinism runs.
enum class Exec { serial, parallel };

int max_threads();
void set_threads(int n);

}  // namespace swarmdiff
