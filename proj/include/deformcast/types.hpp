#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace deformcast {

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatX3T = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX3 = MatX3T<double>;
using Mat = MatX<double>;

/// Parse failure in a mesh or metadata file; `line` is 1-based when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line = -1)
        : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// A forward op produced NaN/Inf, or training diverged.
class NumericFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A simulated scenario exceeded the particle speed bound; carries its seed.
class UnstableScenario : public std::runtime_error {
public:
    UnstableScenario(const std::string& what, std::uint64_t seed)
        : std::runtime_error(what + " (seed " + std::to_string(seed) + ")"), seed_(seed) {}
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace deformcast
