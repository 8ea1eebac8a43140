#include "spx/coeff_model.hpp"

#include "spx/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace spx {

namespace {

constexpr double kLognormalFloor = 1e-8;

std::size_t common_cells(std::size_t a, std::size_t b) { return std::lcm(a, b); }

// sup over D of sum_j w_j |f_j| / denom, exact for piecewise-linear data:
// on each cell the numerator is linear between sign changes of the f_j and a
// ratio of two linear functions is monotone, so endpoints of the pieces suffice.
double sup_weighted_ratio(std::span<const PiecewiseField> fields, const WeightSequence& rho,
                          const PiecewiseField* denom) {
    if (fields.empty()) return 0.0;
    const std::size_t cells = fields.front().cells();
    double best = 0.0;
    std::vector<double> cuts;
    for (std::size_t c = 0; c < cells; ++c) {
        cuts.assign({0.0, 1.0});
        for (const auto& f : fields) {
            const double l = f.left(c), r = f.right(c);
            if ((l < 0.0 && r > 0.0) || (l > 0.0 && r < 0.0)) cuts.push_back(l / (l - r));
        }
        for (double xi : cuts) {
            double num = 0.0;
            for (std::size_t j = 0; j < fields.size(); ++j) {
                if (fields[j].is_zero_on(c)) continue;
                num += rho[static_cast<std::uint32_t>(j + 1)] * std::abs(fields[j].value_in_cell(c, xi));
            }
            const double den = denom ? denom->value_in_cell(c, xi) : 1.0;
            best = std::max(best, num / den);
        }
    }
    return best;
}

}  // namespace

PiecewiseField::PiecewiseField(std::vector<double> left, std::vector<double> right)
    : left_(std::move(left)), right_(std::move(right)) {
    if (left_.empty() || left_.size() != right_.size()) throw ValidationError("piecewise field needs matching cell data");
    for (std::size_t c = 0; c < left_.size(); ++c) {
        if (!std::isfinite(left_[c]) || !std::isfinite(right_[c])) throw ValidationError("piecewise field is not finite");
    }
}

PiecewiseField PiecewiseField::constant(double value, std::size_t cells) {
    return PiecewiseField(std::vector<double>(cells, value), std::vector<double>(cells, value));
}

PiecewiseField PiecewiseField::from_nodes(std::span<const double> node_values) {
    if (node_values.size() < 2) throw ValidationError("need at least two breakpoint values");
    return PiecewiseField(std::vector<double>(node_values.begin(), node_values.end() - 1),
                          std::vector<double>(node_values.begin() + 1, node_values.end()));
}

PiecewiseField PiecewiseField::hat(std::size_t cells, double x0, double x1, double height) {
    std::vector<double> nodes(cells + 1, 0.0);
    const double n = static_cast<double>(cells);
    const auto i0 = static_cast<std::size_t>(std::llround(x0 * n));
    const auto i1 = static_cast<std::size_t>(std::llround(x1 * n));
    if (std::abs(i0 - x0 * n) > 1e-9 || std::abs(i1 - x1 * n) > 1e-9 || (i1 - i0) % 2 != 0 || i1 <= i0 || i1 > cells) {
        throw ValidationError("hat support and midpoint must lie on grid breakpoints");
    }
    const std::size_t mid = (i0 + i1) / 2;
    for (std::size_t i = i0; i <= i1; ++i) {
        const double d = static_cast<double>(i <= mid ? i - i0 : i1 - i) / static_cast<double>(mid - i0);
        nodes[i] = height * d;
    }
    return from_nodes(nodes);
}

double PiecewiseField::slope(std::size_t cell) const {
    return (right_[cell] - left_[cell]) * static_cast<double>(cells());
}

double PiecewiseField::value_in_cell(std::size_t cell, double xi) const {
    return left_[cell] + xi * (right_[cell] - left_[cell]);
}

double PiecewiseField::value(double x) const {
    const double s = std::clamp(x, 0.0, 1.0) * static_cast<double>(cells());
    auto c = static_cast<std::size_t>(std::floor(s));
    if (c >= cells()) c = cells() - 1;
    return value_in_cell(c, s - static_cast<double>(c));
}

double PiecewiseField::derivative(double x) const {
    auto c = static_cast<std::size_t>(std::floor(std::clamp(x, 0.0, 1.0) * static_cast<double>(cells())));
    if (c >= cells()) c = cells() - 1;
    return slope(c);
}

PiecewiseField PiecewiseField::refined(std::size_t cells) const {
    if (cells % this->cells() != 0) throw ValidationError("refinement must be a multiple of the current grid");
    const std::size_t r = cells / this->cells();
    std::vector<double> l(cells), rt(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        const std::size_t parent = c / r;
        const double a = static_cast<double>(c % r) / static_cast<double>(r);
        const double b = static_cast<double>(c % r + 1) / static_cast<double>(r);
        l[c] = value_in_cell(parent, a);
        rt[c] = value_in_cell(parent, b);
    }
    return PiecewiseField(std::move(l), std::move(rt));
}

bool PiecewiseField::is_continuous(double tol) const {
    for (std::size_t c = 1; c < cells(); ++c) {
        if (std::abs(left_[c] - right_[c - 1]) > tol) return false;
    }
    return true;
}

double PiecewiseField::sup_norm() const {
    double m = 0.0;
    for (std::size_t c = 0; c < cells(); ++c) m = std::max({m, std::abs(left_[c]), std::abs(right_[c])});
    return m;
}

double PiecewiseField::grad_sup_norm() const {
    double m = 0.0;
    for (std::size_t c = 0; c < cells(); ++c) m = std::max(m, std::abs(slope(c)));
    return m;
}

double PiecewiseField::min_value() const {
    double m = left_[0];
    for (std::size_t c = 0; c < cells(); ++c) m = std::min({m, left_[c], right_[c]});
    return m;
}

PiecewiseField& PiecewiseField::operator*=(double s) {
    for (double& v : left_) v *= s;
    for (double& v : right_) v *= s;
    return *this;
}

PiecewiseField& PiecewiseField::axpy(double s, const PiecewiseField& other) {
    if (other.cells() != cells()) throw ValidationError("fields on different grids");
    for (std::size_t c = 0; c < cells(); ++c) {
        left_[c] += s * other.left_[c];
        right_[c] += s * other.right_[c];
    }
    return *this;
}

AffineModel::AffineModel(PiecewiseField abar, std::vector<PiecewiseField> psi)
    : abar_(std::move(abar)), psi_(std::move(psi)), abar_min_(0.0) {
    std::size_t cells = abar_.cells();
    for (const auto& f : psi_) cells = common_cells(cells, f.cells());
    if (cells != abar_.cells()) abar_ = abar_.refined(cells);
    for (auto& f : psi_) {
        if (f.cells() != cells) f = f.refined(cells);
    }
    abar_min_ = abar_.min_value();
    if (!(abar_min_ > 0.0)) throw ValidationError("essinf of the nominal coefficient must be positive");
    const double theta = theta_uniform(*this);
    if (!(theta < 1.0)) {
        throw ValidationError("uniform ellipticity violated: theta = " + std::to_string(theta) + " >= 1");
    }
}

LognormalModel::LognormalModel(std::vector<PiecewiseField> psi) : psi_(std::move(psi)) {
    std::size_t cells = 1;
    for (const auto& f : psi_) cells = common_cells(cells, f.cells());
    for (auto& f : psi_) {
        if (f.cells() != cells) f = f.refined(cells);
    }
}

std::size_t model_dims(const ParametricModel& model) {
    return std::visit([](const auto& m) { return m.dims(); }, model);
}

unsigned wavelet_level(std::size_t j) {
    if (j == 0) throw ValidationError("wavelet enumeration is 1-based");
    unsigned l = 0;
    while ((std::size_t{2} << l) <= j) ++l;
    return l;
}

double weighted_abs_sup(std::span<const PiecewiseField> fields, const WeightSequence& rho) {
    return sup_weighted_ratio(fields, rho, nullptr);
}

double theta_uniform(const AffineModel& model) {
    return sup_weighted_ratio(model.psi(), WeightSequence::constant(1.0), &model.abar());
}

double theta_weighted(const AffineModel& model, const WeightSequence& rho) {
    return sup_weighted_ratio(model.psi(), rho, &model.abar());
}

double grad_weighted_sum(const AffineModel& model, const WeightSequence& rho) {
    double best = 0.0;
    for (std::size_t c = 0; c < model.cells(); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < model.dims(); ++j) {
            s += rho[static_cast<std::uint32_t>(j + 1)] * std::abs(model.psi()[j].slope(c));
        }
        best = std::max(best, s);
    }
    return best;
}

std::vector<PiecewiseField> wavelet_fields(const WaveletFamily& family) {
    if (!(family.alpha > 0.0)) throw ValidationError("wavelet smoothness alpha must be positive");
    if (!(family.amplitude >= 0.0)) throw ValidationError("wavelet amplitude must be nonnegative");
    if (family.levels > 20) throw ValidationError("too many wavelet levels");
    const std::size_t cells = std::size_t{2} << family.levels;
    const std::size_t count =
        family.active_dims == 0 ? family.total_functions() : std::min(family.active_dims, family.total_functions());
    std::vector<PiecewiseField> psi;
    psi.reserve(count);
    for (std::size_t j = 1; j <= count; ++j) {
        const unsigned l = wavelet_level(j);
        const std::size_t k = j - (std::size_t{1} << l);
        const double width = std::ldexp(1.0, -static_cast<int>(l));
        const double height = family.amplitude * std::pow(2.0, -family.alpha * l);
        psi.push_back(PiecewiseField::hat(cells, static_cast<double>(k) * width, static_cast<double>(k + 1) * width, height));
    }
    return psi;
}

AffineModel build_wavelet_model(const WaveletFamily& family) {
    auto psi = wavelet_fields(family);
    const std::size_t cells = std::size_t{2} << family.levels;
    try {
        return AffineModel(PiecewiseField::constant(1.0, cells), std::move(psi));
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(e.what()) + "; reduce the wavelet amplitude C");
    }
}

double wavelet_amplitude_for_theta(WaveletFamily family, double target_theta) {
    if (!(target_theta > 0.0 && target_theta < 1.0)) throw ValidationError("target theta must lie in (0,1)");
    family.amplitude = 1.0;
    const auto psi = wavelet_fields(family);
    const double unit_theta = weighted_abs_sup(psi, WeightSequence::constant(1.0));
    return target_theta / unit_theta;
}

WaveletWeights wavelet_weights(const WaveletFamily& family, double beta, double c) {
    if (!(beta > 0.0 && beta < family.alpha)) throw ValidationError("wavelet weights need 0 < beta < alpha");
    if (!(c >= 0.0)) throw ValidationError("wavelet weight constant must be nonnegative");
    const AffineModel model = build_wavelet_model(family);
    std::vector<double> rho(std::max<std::size_t>(model.dims(), 1));
    for (std::size_t j = 1; j <= rho.size(); ++j) rho[j - 1] = 1.0 + c * std::pow(2.0, beta * wavelet_level(j));
    WeightSequence w(std::move(rho));
    const double theta = theta_weighted(model, w);
    return {w, theta, theta < 1.0};
}

PiecewiseField evaluate_affine(const AffineModel& model, std::span<const double> y) {
    if (y.size() != model.dims()) throw ValidationError("parameter vector length does not match the model");
    PiecewiseField a = model.abar();
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (!(std::abs(y[j]) <= 1.0)) throw ValidationError("affine parameters must satisfy |y_j| <= 1");
        if (y[j] != 0.0) a.axpy(y[j], model.psi()[j]);
    }
    if (!(a.min_value() > 0.0)) throw Error("affine coefficient lost positivity; theta < 1 should prevent this");
    return a;
}

ElementField sample_field(const PiecewiseField& field, const FeSpace& space) {
    return sample(space, [&](double x) { return field.value(x); });
}

ElementField sample_field_derivative(const PiecewiseField& field, const FeSpace& space) {
    return sample(space, [&](double x) { return field.derivative(x); });
}

CoefficientSampler::CoefficientSampler(const ParametricModel& model, const FeSpace& space)
    : lognormal_(std::holds_alternative<LognormalModel>(model)), space_(space) {
    if (const auto* affine = std::get_if<AffineModel>(&model)) {
        abar_ = sample_field(affine->abar(), space);
        for (const auto& f : affine->psi()) psi_.push_back(sample_field(f, space));
    } else {
        abar_ = ElementField(space.elements(), 0.0);
        for (const auto& f : std::get<LognormalModel>(model).psi()) psi_.push_back(sample_field(f, space));
    }
}

ElementField CoefficientSampler::operator()(std::span<const double> y) const {
    if (y.size() != psi_.size()) throw ValidationError("parameter vector length does not match the model");
    ElementField a = abar_;
    auto out = a.values();
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (!std::isfinite(y[j])) throw ValidationError("parameters must be finite");
        if (!lognormal_ && !(std::abs(y[j]) <= 1.0)) throw ValidationError("affine parameters must satisfy |y_j| <= 1");
        if (y[j] == 0.0) continue;
        auto p = psi_[j].values();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[j] * p[i];
    }
    if (lognormal_) {
        for (double& v : out) v = std::max(std::exp(v), kLognormalFloor);
    } else {
        for (double v : out) {
            if (!(v > 0.0)) throw Error("affine coefficient lost positivity; theta < 1 should prevent this");
        }
    }
    return a;
}

ElementField sample_coefficient(const ParametricModel& model, const FeSpace& space, std::span<const double> y) {
    return CoefficientSampler(model, space)(y);
}

double hermite_theta() {
    const double d = 1.0 - 1.0 / std::sqrt(2.0);
    return 1.0 + d * d;
}

RescaledWeights rescale_weights_lognormal(const LognormalModel& model, const WeightSequence& rho, unsigned r) {
    if (r < 1) throw ValidationError("rescaling requires r >= 1");
    const double bound = std::log(hermite_theta()) / std::sqrt(static_cast<double>(r));
    const double k1 = weighted_abs_sup(model.psi(), rho);
    double tau = 1.0;
    while (k1 * tau >= bound) tau *= 0.5;
    return {rho.scaled(tau), tau, k1 * tau, bound};
}

}  // namespace spx
