#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace spx {

/// Finitely supported exponent sequence. Only nonzero exponents are stored,
/// sorted by (1-based) dimension.
class MultiIndex {
public:
    struct Entry {
        std::uint32_t dim;
        std::uint32_t exponent;
        friend bool operator==(const Entry&, const Entry&) = default;
    };

    MultiIndex() = default;

    /// From (dim, exponent) pairs in any order. Zero exponents are dropped,
    /// repeated dimensions are rejected.
    static MultiIndex from_pairs(std::initializer_list<std::pair<std::uint32_t, std::uint32_t>> pairs);
    static MultiIndex from_pairs(std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs);
    /// dense[0] is the exponent of dimension 1.
    static MultiIndex from_dense(std::span<const std::uint32_t> dense);
    static MultiIndex from_dense(std::initializer_list<std::uint32_t> dense);
    static MultiIndex unit(std::uint32_t dim, std::uint32_t exponent = 1);

    std::uint32_t operator[](std::uint32_t dim) const;
    std::uint32_t order() const { return order_; }
    bool is_zero() const { return entries_.empty(); }
    std::span<const Entry> entries() const { return entries_; }
    /// Largest dimension with a nonzero exponent, 0 for the zero index.
    std::uint32_t max_dim() const { return entries_.empty() ? 0 : entries_.back().dim; }

    MultiIndex incremented(std::uint32_t dim) const;
    /// Requires (*this)[dim] > 0.
    MultiIndex decremented(std::uint32_t dim) const;
    /// Componentwise mu <= nu.
    bool dominated_by(const MultiIndex& other) const;

    std::vector<std::uint32_t> dense(std::uint32_t dims) const;

    /// JSON array of [dim, exponent] pairs, e.g. "[[1,2],[3,1]]".
    std::string to_json() const;
    static MultiIndex from_json(const std::string& text);

    friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

private:
    std::vector<Entry> entries_;
    std::uint32_t order_ = 0;
};

/// Canonical deterministic order: total degree ascending, then graded
/// lexicographic with larger exponents in lower dimensions first.
std::strong_ordering canonical_compare(const MultiIndex& a, const MultiIndex& b);

struct CanonicalLess {
    bool operator()(const MultiIndex& a, const MultiIndex& b) const { return canonical_compare(a, b) < 0; }
};

struct MultiIndexHash {
    std::size_t operator()(const MultiIndex& nu) const noexcept;
};

/// Positive weights rho_j, j = 1..J_max, with a constant tail equal to the last value.
class WeightSequence {
public:
    explicit WeightSequence(std::vector<double> values);
    static WeightSequence constant(double value, std::size_t count = 1);

    double operator[](std::uint32_t dim) const;
    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    WeightSequence scaled(double factor) const;

private:
    std::vector<double> values_;
};

/// Index set containing every ancestor nu - e_j of each member. The zero
/// index is always present; insertion order is retained.
class DownwardClosedSet {
public:
    DownwardClosedSet();

    /// Throws ValidationError when an ancestor of nu is missing.
    /// Returns false if nu was already present.
    bool insert(const MultiIndex& nu);
    bool contains(const MultiIndex& nu) const { return lookup_.contains(nu); }
    /// Position in generation order, or npos.
    std::size_t position(const MultiIndex& nu) const;
    std::size_t size() const { return members_.size(); }
    std::span<const MultiIndex> members() const { return members_; }
    std::uint32_t max_order() const;
    std::uint32_t max_dim() const;

    /// {nu : nu_j <= max_exponent, supp nu in 1..dims}.
    static DownwardClosedSet tensor(std::uint32_t dims, std::uint32_t max_exponent);
    /// {nu : |nu| <= max_order, supp nu in 1..dims}.
    static DownwardClosedSet total_degree(std::uint32_t dims, std::uint32_t max_order);

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::vector<MultiIndex> members_;
    std::unordered_map<MultiIndex, std::size_t, MultiIndexHash> lookup_;
};

bool is_downward_closed(std::span<const MultiIndex> indices);

/// prod nu_j!. Throws ValidationError when |nu| > 20.
std::uint64_t factorial(const MultiIndex& nu);

/// rho^nu = prod rho_j^{nu_j}.
double weight_power(const WeightSequence& rho, const MultiIndex& nu);

/// prod binom(nu_j, mu_j); zero unless mu <= nu. Throws OverflowError.
std::uint64_t binomial(const MultiIndex& nu, const MultiIndex& mu);

/// b_nu = sum over mu <= nu with max_j mu_j <= r of binom(nu, mu) rho^{2 mu}.
/// rho[j-1] is rho_j; dimensions beyond rho.size() reuse the last entry.
double b_weight(const MultiIndex& nu, std::span<const double> rho, std::uint32_t r);
double b_weight(const MultiIndex& nu, const WeightSequence& rho, std::uint32_t r);

/// Greedy frontier expansion on the surrogate rho^{-nu} over dimensions
/// 1..rho.size(): the `budget` largest values with |nu| <= max_degree.
DownwardClosedSet generate_envelope(const WeightSequence& rho, std::size_t budget, std::uint32_t max_degree);

/// Members with |nu| = n in canonical order.
std::vector<MultiIndex> layer(const DownwardClosedSet& set, std::uint32_t n);

/// Number of multi-indices with |nu| = n supported in 1..dims.
std::uint64_t full_layer_size(std::uint32_t dims, std::uint32_t n);

}  // namespace spx
