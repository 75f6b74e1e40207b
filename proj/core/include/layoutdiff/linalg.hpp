#pragma once

#include <Eigen/Dense>

namespace layoutdiff {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

}  // namespace layoutdiff
