#pragma once

#include <Eigen/Core>

namespace bayesrisk {

// Semantic embedding of an object or pixel. Dimension is fixed per dataset.
using Feature = Eigen::VectorXd;

}  // namespace bayesrisk
