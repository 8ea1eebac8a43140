#pragma once

// Taylor coefficients t_nu of the discrete affine solution map y -> u_h(y),
// computed layer by layer from the nominal operator, plus the strong-form
// recursion for Delta t_nu and the summability diagnostics built on them.

#include "spx/coeff_model.hpp"
#include "spx/multiindex.hpp"
#include "spx/spatial_fem.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace spx {

using LoadFunction = std::function<double(double)>;

struct TaylorOptions {
    LoadFunction load = [](double) { return 1.0; };
    /// Evaluate Delta t_nu by the strong-form recursion while traversing.
    bool laplacians = false;
    /// Keep t_nu (and Delta t_nu) for every index. When false only norms are
    /// kept and fields are released once the next layer is done.
    bool retain_fields = true;
    /// Exponents tau for which ||Delta t_nu||_{L^tau} is cached.
    std::vector<double> ltau_exponents;
    unsigned threads = 1;
};

struct TaylorTerm {
    MultiIndex index;
    std::optional<GridFunction> t;
    std::optional<ElementField> laplacian;
    double norm_V = 0.0;
    double norm_W = -1.0;             ///< ||Delta t_nu||_{L2}; negative until computed
    double energy = 0.0;              ///< int abar |t_nu'|^2
    double laplacian_energy = -1.0;   ///< int abar |Delta t_nu|^2
    std::vector<std::pair<double, double>> ltau;  ///< (tau, ||Delta t_nu||_{L^tau})

    double ltau_norm(double tau) const;
};

class TaylorExpansion {
public:
    const AffineModel& model() const { return *model_; }
    const FeSpace& space() const { return space_; }
    const LoadFunction& load() const { return load_; }
    std::span<const TaylorTerm> terms() const { return terms_; }
    /// nullptr when nu is not stored.
    const TaylorTerm* find(const MultiIndex& nu) const;
    std::uint32_t max_order() const { return max_order_; }
    /// Layer n holds every index of order n over the model's dimensions.
    bool layer_complete(std::uint32_t n) const;
    bool has_laplacians() const { return has_laplacians_; }
    bool has_fields() const { return has_fields_; }

private:
    friend TaylorExpansion compute_taylor(const AffineModel&, const FeSpace&, const DownwardClosedSet&, TaylorOptions);
    friend void compute_laplacians(TaylorExpansion&, std::span<const double>);

    std::shared_ptr<const AffineModel> model_;
    FeSpace space_{2, 1};
    LoadFunction load_;
    std::vector<TaylorTerm> terms_;  // layer order, canonical within a layer
    std::unordered_map<MultiIndex, std::size_t, MultiIndexHash> lookup_;
    std::vector<std::size_t> layer_sizes_;
    std::uint32_t max_order_ = 0;
    bool has_laplacians_ = false;
    bool has_fields_ = false;
};

/// Requires theta_uniform(model) < 1 (guaranteed by AffineModel) and a
/// downward closed index set.
TaylorExpansion compute_taylor(const AffineModel& model, const FeSpace& space, const DownwardClosedSet& indices,
                               TaylorOptions options = {});

/// Adds Delta t_nu to an expansion computed with retained fields. Throws
/// if abar is not bounded away from zero at a quadrature point.
void compute_laplacians(TaylorExpansion& expansion, std::span<const double> ltau_exponents = {});

struct LayerSum {
    std::uint32_t order;
    std::size_t size;
    bool complete;
    double D;  ///< sum over |nu| = n of rho^{2 nu} int abar |t_nu'|^2
    double C;  ///< same with Delta t_nu; negative without Laplacians
};

struct SummabilityReport {
    std::vector<LayerSum> layers;
    double theta = 0.0;  ///< theta_weighted(model, rho)
    double kappa = 0.0;  ///< theta / (2 - theta)
    double weighted_l2_V = 0.0;
    double weighted_l2_W = -1.0;
    struct LpEntry {
        double p;
        double direct;
        double holder_bound;
    };
    std::vector<LpEntry> lp;
    double tail_exponent = 0.0;  ///< -slope of sorted ||t_nu||_V against rank
};

/// D_n, C_n, theta and kappa for the rho-weighted expansion.
SummabilityReport layer_sums(const TaylorExpansion& expansion, const WeightSequence& rho);
/// layer_sums plus weighted l2 totals, l^p values and the fitted tail exponent.
SummabilityReport summability_report(const TaylorExpansion& expansion, const WeightSequence& rho,
                                     std::span<const double> p_values);

enum class NormKind { V, W };

/// sum over stored nu of (rho^nu ||t_nu||)^2.
double weighted_l2(const TaylorExpansion& expansion, const WeightSequence& rho, NormKind which);

/// (sum v^p)^{1/p}.
double lp_quasinorm(std::span<const double> values, double p);
/// Hoelder bound on the l^p norm: weighted l2 times (prod_j (1 - rho_j^{-q})^{-1})^{1/q},
/// 1/p = 1/2 + 1/q, product over the model dimensions. Requires rho_j > 1, p < 2.
double holder_lp_bound(const TaylorExpansion& expansion, const WeightSequence& rho, double p, NormKind which);

struct RankedIndex {
    MultiIndex index;
    double norm;
};

/// Indices ordered by decreasing norm (ties: canonical order), truncated to n.
std::vector<RankedIndex> select_best_n(const TaylorExpansion& expansion, std::size_t n, NormKind metric);

/// sum_{nu in subset} t_nu y^nu; requires |y_j| <= 1 and retained fields.
GridFunction eval_truncated(const TaylorExpansion& expansion, std::span<const MultiIndex> subset,
                            std::span<const double> y);

struct SupErrorEstimate {
    double estimate;    ///< max over samples of ||u_h(y) - truncated(y)||_V
    double tail_bound;  ///< sum of ||t_nu||_V over stored nu outside the subset
    std::uint64_t seed;
    std::size_t samples;
};

/// Seeded uniform samples y in [-1,1]^J.
SupErrorEstimate sup_error_estimate(const TaylorExpansion& expansion, std::span<const MultiIndex> subset,
                                    std::size_t samples, std::uint64_t seed);
/// Same estimate over explicit parameter points.
SupErrorEstimate sup_error_at(const TaylorExpansion& expansion, std::span<const MultiIndex> subset,
                              std::span<const std::vector<double>> points);

/// sum over stored nu of (rho^nu (||t_nu||_V + ||Delta t_nu||_{L^tau}))^tau.
double ltau_summability(const TaylorExpansion& expansion, double tau, const WeightSequence& rho);

/// Sorted l^q tail (sum_{k > n} a_k^q)^{1/q} of decreasingly sorted norms,
/// fitted as C n^{-s} over ranks [first, last]. Returns s.
double sorted_tail_rate(std::vector<double> norms, std::size_t first, std::size_t last, double q);

/// CSV rows: nu, order, norm_V, norm_W.
void write_csv(std::ostream& out, const TaylorExpansion& expansion);

}  // namespace spx
