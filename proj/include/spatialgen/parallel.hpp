#pragma once

namespace spatialgen {

// Kernels with a parallel and a serial path take this tag. The serial path is
// the reference the tests compare against; both must produce identical output.
enum class Exec { Parallel, Serial };

// Caps OpenMP parallelism for the whole process. n <= 0 restores the default
// (SPATIALGEN_THREADS if set, else all cores).
void set_thread_count(int n);
int thread_count();

}  // namespace spatialgen
