#pragma once

#include <Eigen/Dense>

namespace cpinn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

}  // namespace cpinn
