#include "ndro/common.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

namespace ndro {

std::string format_number(double v, int digits) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

Norm parse_norm(const std::string& s) {
    if (s == "l1" || s == "L1" || s == "1") return Norm::l1;
    if (s == "l2" || s == "L2" || s == "2") return Norm::l2;
    if (s == "linf" || s == "Linf" || s == "inf") return Norm::linf;
    throw DomainError("unknown norm '" + s + "' (expected l1, l2 or linf)");
}

std::string to_string(Norm n) {
    switch (n) {
        case Norm::l1: return "l1";
        case Norm::l2: return "l2";
        case Norm::linf: return "linf";
    }
    return "?";
}

Norm dual_of(Norm n) {
    switch (n) {
        case Norm::l1: return Norm::linf;
        case Norm::l2: return Norm::l2;
        case Norm::linf: return Norm::l1;
    }
    return Norm::l2;
}

double norm_of(const VectorXd& v, Norm n) {
    if (v.size() == 0) return 0.0;
    switch (n) {
        case Norm::l1: return v.lpNorm<1>();
        case Norm::l2: return v.norm();
        case Norm::linf: return v.lpNorm<Eigen::Infinity>();
    }
    return 0.0;
}

VectorXd norm_subgradient(const VectorXd& v, Norm n) {
    VectorXd g = VectorXd::Zero(v.size());
    if (v.size() == 0) return g;
    switch (n) {
        case Norm::l1:
            for (Eigen::Index i = 0; i < v.size(); ++i) g(i) = v(i) > 0 ? 1.0 : (v(i) < 0 ? -1.0 : 0.0);
            break;
        case Norm::l2: {
            double r = v.norm();
            if (r > 0) g = v / r;
            break;
        }
        case Norm::linf: {
            Eigen::Index k = 0;
            double best = 0.0;
            for (Eigen::Index i = 0; i < v.size(); ++i)
                if (std::abs(v(i)) > best) { best = std::abs(v(i)); k = i; }
            if (best > 0) g(k) = v(k) > 0 ? 1.0 : -1.0;
            break;
        }
    }
    return g;
}

double parse_order(const std::string& s) {
    if (s == "inf" || s == "infinity" || s == "Inf") return kInf;
    double p = 0.0;
    try {
        std::size_t used = 0;
        p = std::stod(s, &used);
        if (used != s.size()) throw DomainError("bad order");
    } catch (const std::exception&) {
        throw DomainError("invalid order p '" + s + "'");
    }
    if (!(p >= 1.0)) throw DomainError("order p must be >= 1");
    return p;
}

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(mix64(seed) ^ (a * 0xd1b54a32d192ed03ULL)) ^ (b * 0x8cb92ba72f3d8dd7ULL));
}

std::uint64_t Rng::next_u64() { return mix64(seed_ ^ mix64(counter_++)); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

int Rng::categorical(const std::vector<double>& probs) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0) return static_cast<int>(i);
    return 0;
}

}  // namespace ndro
