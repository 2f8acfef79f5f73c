#pragma once

namespace idpp {

// Execution policy for the data-parallel kernels. Every parallel kernel has
// a serial twin with identical arithmetic; parallel variants write disjoint
// outputs and reduce serially, so results are bit-identical across policies.
enum class Exec {
  serial,
  parallel,
};

}  // namespace idpp
