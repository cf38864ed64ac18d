#pragma once

#include <Eigen/Dense>

namespace oscinv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace oscinv
