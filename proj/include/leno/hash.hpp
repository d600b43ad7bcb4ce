#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

#include <Eigen/Core>

namespace leno {

// 64-bit FNV-1a, used for content fingerprints (domain, config).
class Fnv1a {
public:
    Fnv1a& bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a& text(std::string_view s) { return bytes(s.data(), s.size()); }
    Fnv1a& value(double x) { return bytes(&x, sizeof x); }
    Fnv1a& value(std::int64_t x) { return bytes(&x, sizeof x); }
    template <typename Derived>
    Fnv1a& values(const Eigen::DenseBase<Derived>& m) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) value(static_cast<double>(m(i, j)));
        return *this;
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

} // namespace leno
