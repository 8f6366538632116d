#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ndro {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised for invalid inputs and failed model assumptions (CLI exit code 1).
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Norm { l1, l2, linf };

Norm parse_norm(const std::string& s);
std::string to_string(Norm n);
Norm dual_of(Norm n);

double norm_of(const VectorXd& v, Norm n);

/// A subgradient of the norm at v (zero at the origin).
VectorXd norm_subgradient(const VectorXd& v, Norm n);

/// Shortest round form with the given number of significant digits ("%.12g").
std::string format_number(double v, int digits = 12);

/// Order p of a transport cost or ball; kInf for p = infinity.
double parse_order(const std::string& s);

/// Counter-based generator (SplitMix64 finalizer over seed and counter).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}
    std::uint64_t next_u64();
    double uniform();              // [0, 1)
    double normal();               // standard normal, Box-Muller
    int categorical(const std::vector<double>& probs);
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

/// Seed for an independent stream identified by (seed, a, b).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace ndro
