#include "spatialgen/parallel.hpp"
#include "spatialgen/common.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace spatialgen {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::Schema: return "schema";
        case ErrorKind::Invariant: return "invariant";
        case ErrorKind::PlacementFailure: return "placement-failure";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::Io: return "io";
        case ErrorKind::Backend: return "backend";
    }
    return "unknown";
}

void set_thread_count(int n) {
    if (n <= 0) {
        if (const char* env = std::getenv("SPATIALGEN_THREADS")) {
            n = std::atoi(env);
        }
    }
    if (n <= 0) n = omp_get_num_procs();
    omp_set_num_threads(n);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace spatialgen
