#pragma once

#include <Eigen/Dense>

namespace spgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Timestep index in 1..T. Index 0 denotes the clean signal.
using Timestep = int;

}  // namespace spgd
