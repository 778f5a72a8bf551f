#pragma once

#include <cmath>
#include <cstdlib>
#include <string>

#include "slotforge/rng.hpp"
#include "slotforge/tensor.hpp"

namespace sf = slotforge;

template <class T>
sf::Tensor<T> random_tensor(std::vector<size_t> shape, sf::Rng& rng, double stddev = 1.0) {
    sf::Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

template <class T>
bool bitwise_equal(const sf::Tensor<T>& a, const sf::Tensor<T>& b) {
    if (a.shape != b.shape) return false;
    for (size_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

template <class T>
double max_abs_diff(const sf::Tensor<T>& a, const sf::Tensor<T>& b) {
    double m = 0;
    for (size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}
