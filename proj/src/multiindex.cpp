#include "spx/multiindex.hpp"

#include "spx/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_set>

#include "json.hpp"

namespace spx {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) {
        throw OverflowError("integer overflow in multi-index arithmetic");
    }
    return out;
}

std::uint64_t binomial_scalar(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    // C(n, i+1) = C(n, i) * (n-i) / (i+1) stays integral at every step.
    unsigned __int128 acc = 1;
    for (std::uint64_t i = 0; i < k; ++i) {
        acc = acc * (n - i) / (i + 1);
        if (acc > std::numeric_limits<std::uint64_t>::max()) {
            throw OverflowError("binomial coefficient overflows 64 bits");
        }
    }
    return static_cast<std::uint64_t>(acc);
}

}  // namespace

MultiIndex MultiIndex::from_pairs(std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs) {
    MultiIndex nu;
    for (const auto& [dim, exp] : pairs) {
        if (dim == 0) throw ValidationError("multi-index dimensions are 1-based");
        if (exp == 0) continue;
        nu.entries_.push_back({dim, exp});
    }
    std::sort(nu.entries_.begin(), nu.entries_.end(), [](const Entry& a, const Entry& b) { return a.dim < b.dim; });
    for (std::size_t i = 1; i < nu.entries_.size(); ++i) {
        if (nu.entries_[i].dim == nu.entries_[i - 1].dim) throw ValidationError("repeated dimension in multi-index");
    }
    for (const auto& e : nu.entries_) nu.order_ += e.exponent;
    return nu;
}

MultiIndex MultiIndex::from_pairs(std::initializer_list<std::pair<std::uint32_t, std::uint32_t>> pairs) {
    return from_pairs(std::span<const std::pair<std::uint32_t, std::uint32_t>>(pairs.begin(), pairs.size()));
}

MultiIndex MultiIndex::from_dense(std::span<const std::uint32_t> dense) {
    MultiIndex nu;
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] == 0) continue;
        nu.entries_.push_back({static_cast<std::uint32_t>(i + 1), dense[i]});
        nu.order_ += dense[i];
    }
    return nu;
}

MultiIndex MultiIndex::from_dense(std::initializer_list<std::uint32_t> dense) {
    return from_dense(std::span<const std::uint32_t>(dense.begin(), dense.size()));
}

MultiIndex MultiIndex::unit(std::uint32_t dim, std::uint32_t exponent) {
    return from_pairs({{dim, exponent}});
}

std::uint32_t MultiIndex::operator[](std::uint32_t dim) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), dim,
                               [](const Entry& e, std::uint32_t d) { return e.dim < d; });
    return (it != entries_.end() && it->dim == dim) ? it->exponent : 0;
}

MultiIndex MultiIndex::incremented(std::uint32_t dim) const {
    if (dim == 0) throw ValidationError("multi-index dimensions are 1-based");
    MultiIndex out = *this;
    auto it = std::lower_bound(out.entries_.begin(), out.entries_.end(), dim,
                               [](const Entry& e, std::uint32_t d) { return e.dim < d; });
    if (it != out.entries_.end() && it->dim == dim) {
        ++it->exponent;
    } else {
        out.entries_.insert(it, Entry{dim, 1});
    }
    ++out.order_;
    return out;
}

MultiIndex MultiIndex::decremented(std::uint32_t dim) const {
    MultiIndex out = *this;
    auto it = std::lower_bound(out.entries_.begin(), out.entries_.end(), dim,
                               [](const Entry& e, std::uint32_t d) { return e.dim < d; });
    if (it == out.entries_.end() || it->dim != dim) {
        throw ValidationError("cannot decrement a zero exponent");
    }
    if (--it->exponent == 0) out.entries_.erase(it);
    --out.order_;
    return out;
}

bool MultiIndex::dominated_by(const MultiIndex& other) const {
    for (const auto& e : entries_) {
        if (e.exponent > other[e.dim]) return false;
    }
    return true;
}

std::vector<std::uint32_t> MultiIndex::dense(std::uint32_t dims) const {
    if (max_dim() > dims) throw ValidationError("multi-index support exceeds requested dimension count");
    std::vector<std::uint32_t> out(dims, 0);
    for (const auto& e : entries_) out[e.dim - 1] = e.exponent;
    return out;
}

std::string MultiIndex::to_json() const {
    std::string out = "[";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (i) out += ',';
        out += '[' + std::to_string(entries_[i].dim) + ',' + std::to_string(entries_[i].exponent) + ']';
    }
    out += ']';
    return out;
}

MultiIndex MultiIndex::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed multi-index: ") + e.what());
    }
    if (!j.is_array()) throw ValidationError("multi-index must be a JSON array");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2) throw ValidationError("multi-index entries must be [dim, exponent]");
        pairs.emplace_back(p[0].get<std::uint32_t>(), p[1].get<std::uint32_t>());
    }
    return from_pairs(pairs);
}

std::strong_ordering canonical_compare(const MultiIndex& a, const MultiIndex& b) {
    if (auto c = a.order() <=> b.order(); c != 0) return c;
    auto ea = a.entries();
    auto eb = b.entries();
    std::size_t i = 0;
    for (; i < ea.size() && i < eb.size(); ++i) {
        // lower active dimension first, then larger exponent first
        if (ea[i].dim != eb[i].dim) {
            return ea[i].dim < eb[i].dim ? std::strong_ordering::less : std::strong_ordering::greater;
        }
        if (ea[i].exponent != eb[i].exponent) {
            return ea[i].exponent > eb[i].exponent ? std::strong_ordering::less : std::strong_ordering::greater;
        }
    }
    return ea.size() <=> eb.size();
}

std::size_t MultiIndexHash::operator()(const MultiIndex& nu) const noexcept {
    std::size_t h = 0xcbf29ce484222325ull;
    for (const auto& e : nu.entries()) {
        h ^= (static_cast<std::size_t>(e.dim) << 32) ^ e.exponent;
        h *= 0x100000001b3ull;
    }
    return h;
}

WeightSequence::WeightSequence(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ValidationError("weight sequence needs at least one value");
    for (double v : values_) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("weights must be strictly positive and finite");
    }
}

WeightSequence WeightSequence::constant(double value, std::size_t count) {
    return WeightSequence(std::vector<double>(std::max<std::size_t>(count, 1), value));
}

double WeightSequence::operator[](std::uint32_t dim) const {
    if (dim == 0) throw ValidationError("weight dimensions are 1-based");
    return dim <= values_.size() ? values_[dim - 1] : values_.back();
}

WeightSequence WeightSequence::scaled(double factor) const {
    std::vector<double> v = values_;
    for (double& x : v) x *= factor;
    return WeightSequence(std::move(v));
}

DownwardClosedSet::DownwardClosedSet() {
    members_.emplace_back();
    lookup_.emplace(MultiIndex{}, 0);
}

bool DownwardClosedSet::insert(const MultiIndex& nu) {
    if (contains(nu)) return false;
    for (const auto& e : nu.entries()) {
        if (!contains(nu.decremented(e.dim))) {
            throw ValidationError("inserting " + nu.to_json() + " would break downward closedness");
        }
    }
    lookup_.emplace(nu, members_.size());
    members_.push_back(nu);
    return true;
}

std::size_t DownwardClosedSet::position(const MultiIndex& nu) const {
    auto it = lookup_.find(nu);
    return it == lookup_.end() ? npos : it->second;
}

std::uint32_t DownwardClosedSet::max_order() const {
    std::uint32_t m = 0;
    for (const auto& nu : members_) m = std::max(m, nu.order());
    return m;
}

std::uint32_t DownwardClosedSet::max_dim() const {
    std::uint32_t m = 0;
    for (const auto& nu : members_) m = std::max(m, nu.max_dim());
    return m;
}

DownwardClosedSet DownwardClosedSet::tensor(std::uint32_t dims, std::uint32_t max_exponent) {
    std::vector<MultiIndex> all;
    std::vector<std::uint32_t> digits(dims, 0);
    while (true) {
        all.push_back(MultiIndex::from_dense(digits));
        std::size_t k = 0;
        while (k < dims && digits[k] == max_exponent) digits[k++] = 0;
        if (k == dims) break;
        ++digits[k];
    }
    std::sort(all.begin(), all.end(), CanonicalLess{});
    DownwardClosedSet set;
    for (const auto& nu : all) set.insert(nu);
    return set;
}

DownwardClosedSet DownwardClosedSet::total_degree(std::uint32_t dims, std::uint32_t max_order) {
    DownwardClosedSet set;
    std::vector<MultiIndex> frontier{MultiIndex{}};
    for (std::uint32_t n = 1; n <= max_order; ++n) {
        std::vector<MultiIndex> next;
        for (const auto& nu : frontier) {
            // extend only in dimensions >= the last active one so each index is produced once
            for (std::uint32_t j = std::max<std::uint32_t>(1, nu.max_dim()); j <= dims; ++j) {
                next.push_back(nu.incremented(j));
            }
        }
        std::sort(next.begin(), next.end(), CanonicalLess{});
        for (const auto& nu : next) set.insert(nu);
        frontier = std::move(next);
    }
    return set;
}

bool is_downward_closed(std::span<const MultiIndex> indices) {
    std::unordered_set<MultiIndex, MultiIndexHash> present(indices.begin(), indices.end());
    for (const auto& nu : indices) {
        for (const auto& e : nu.entries()) {
            if (!present.contains(nu.decremented(e.dim))) return false;
        }
    }
    return indices.empty() || present.contains(MultiIndex{});
}

std::uint64_t factorial(const MultiIndex& nu) {
    if (nu.order() > 20) throw ValidationError("factorial requires |nu| <= 20");
    std::uint64_t out = 1;
    for (const auto& e : nu.entries()) {
        for (std::uint64_t k = 2; k <= e.exponent; ++k) out = checked_mul(out, k);
    }
    return out;
}

double weight_power(const WeightSequence& rho, const MultiIndex& nu) {
    double out = 1.0;
    for (const auto& e : nu.entries()) out *= std::pow(rho[e.dim], static_cast<double>(e.exponent));
    return out;
}

std::uint64_t binomial(const MultiIndex& nu, const MultiIndex& mu) {
    if (!mu.dominated_by(nu)) return 0;
    std::uint64_t out = 1;
    for (const auto& e : nu.entries()) out = checked_mul(out, binomial_scalar(e.exponent, mu[e.dim]));
    return out;
}

double b_weight(const MultiIndex& nu, std::span<const double> rho, std::uint32_t r) {
    if (r < 1) throw ValidationError("b_weight requires r >= 1");
    if (rho.empty()) throw ValidationError("b_weight requires at least one weight");
    // The sum over mu factorizes into one finite sum per active dimension.
    double out = 1.0;
    for (const auto& e : nu.entries()) {
        const double rj = e.dim <= rho.size() ? rho[e.dim - 1] : rho.back();
        const double r2 = rj * rj;
        double factor = 0.0;
        double power = 1.0;
        for (std::uint32_t m = 0; m <= std::min(e.exponent, r); ++m) {
            factor += static_cast<double>(binomial_scalar(e.exponent, m)) * power;
            power *= r2;
        }
        out *= factor;
    }
    return out;
}

double b_weight(const MultiIndex& nu, const WeightSequence& rho, std::uint32_t r) {
    return b_weight(nu, rho.values(), r);
}

DownwardClosedSet generate_envelope(const WeightSequence& rho, std::size_t budget, std::uint32_t max_degree) {
    if (budget < 1) throw ValidationError("envelope budget must be >= 1");
    for (double v : rho.values()) {
        if (!(v > 1.0)) throw ValidationError("envelope surrogate needs all rho_j > 1");
    }
    const auto dims = static_cast<std::uint32_t>(rho.size());
    std::vector<double> log_rho(dims);
    for (std::uint32_t j = 0; j < dims; ++j) log_rho[j] = std::log(rho.values()[j]);

    struct Candidate {
        double log_value;  // log rho^{-nu}
        MultiIndex index;
    };
    // "a before b" in selection order
    auto ahead = [](const Candidate& a, const Candidate& b) {
        const double tol = 1e-12 * std::max({1.0, std::abs(a.log_value), std::abs(b.log_value)});
        if (std::abs(a.log_value - b.log_value) > tol) return a.log_value > b.log_value;
        return canonical_compare(a.index, b.index) < 0;
    };
    auto heap_less = [&](const Candidate& a, const Candidate& b) { return ahead(b, a); };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(heap_less)> frontier(heap_less);
    std::unordered_set<MultiIndex, MultiIndexHash> seen;

    DownwardClosedSet set;
    auto push_children = [&](const MultiIndex& nu, double log_value) {
        if (nu.order() >= max_degree) return;
        for (std::uint32_t j = 1; j <= dims; ++j) {
            MultiIndex child = nu.incremented(j);
            if (seen.insert(child).second) frontier.push({log_value - log_rho[j - 1], std::move(child)});
        }
    };
    seen.insert(MultiIndex{});
    push_children(MultiIndex{}, 0.0);
    while (set.size() < budget && !frontier.empty()) {
        Candidate best = frontier.top();
        frontier.pop();
        set.insert(best.index);
        push_children(best.index, best.log_value);
    }
    return set;
}

std::vector<MultiIndex> layer(const DownwardClosedSet& set, std::uint32_t n) {
    std::vector<MultiIndex> out;
    for (const auto& nu : set.members()) {
        if (nu.order() == n) out.push_back(nu);
    }
    std::sort(out.begin(), out.end(), CanonicalLess{});
    return out;
}

std::uint64_t full_layer_size(std::uint32_t dims, std::uint32_t n) {
    if (dims == 0) return n == 0 ? 1 : 0;
    return binomial_scalar(static_cast<std::uint64_t>(n) + dims - 1, dims - 1);
}

}  // namespace spx
