#pragma once

#include <string>
#include <string_view>

#include "twolevel/measures.hpp"

namespace twolevel {

/// One-token initial measures:
///   delta:x  uniform  beta:lambda,alpha
///   example1:x0  example2  example3  example4:c  example5:a,alpha
///   mixture:[0.3*delta:1;0.7*uniform]
/// The examples need the lambda they are run with; it is only validated there.
LimitMeasure parse_initial(std::string_view spec, double lambda);

/// parse_initial projected onto the lattice {0, 1/n, ..., 1}.
GridMeasure initial_on_lattice(std::string_view spec, double lambda, int n);

}  // namespace twolevel
