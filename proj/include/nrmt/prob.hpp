// Probability-vector primitives shared by the model and the objectives.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace nrmt {

// Nonnegative reals over a vocabulary, summing to 1.
using ProbDist = std::vector<double>;

inline void validate_prob_dist(const ProbDist& p) {
    if (p.empty()) throw std::invalid_argument("probability distribution is empty");
    double sum = 0.0;
    for (double x : p) {
        if (!std::isfinite(x) || x < 0.0)
            throw std::invalid_argument("probability distribution has a negative or non-finite entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("probability distribution does not sum to 1");
}

inline double log_sum_exp(std::span<const double> z) {
    double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double x : z) s += std::exp(x - m);
    return m + std::log(s);
}

// Max-subtracted softmax with temperature; tau -> 0 approaches the argmax
// one-hot, tau = 1 is the standard softmax.
inline ProbDist softmax_with_temperature(std::span<const double> logits, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("softmax temperature must be > 0");
    if (logits.empty()) throw std::invalid_argument("softmax of empty logits");
    double m = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(m)) throw std::invalid_argument("softmax of non-finite logits");
    ProbDist p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - m) / tau);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

inline ProbDist softmax(std::span<const double> logits) { return softmax_with_temperature(logits, 1.0); }

inline ProbDist one_hot(std::size_t size, int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= size)
        throw std::out_of_range("one_hot index out of range");
    ProbDist q(size, 0.0);
    q[static_cast<std::size_t>(index)] = 1.0;
    return q;
}

}  // namespace nrmt
