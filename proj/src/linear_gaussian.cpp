#include "sopabn/linear_gaussian.hpp"

#include <cctype>
#include <regex>

#include "sopabn/errors.hpp"
#include "sopabn/numerics.hpp"

namespace sopabn {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("linear model: " + what);
}

template <typename Seq>
void check_count(const Seq& seq, int expected, const char* name) {
    require(static_cast<int>(seq.size()) == expected,
            std::string(name) + " must have " + std::to_string(expected) +
                " entries, got " + std::to_string(seq.size()));
}

} // namespace

void LinearDynamics::validate() const {
    require(d_s >= 1, "d_s must be >= 1");
    require(d_a >= 1, "d_a must be >= 1");
    require(horizon >= 2, "horizon must be >= 2");
    const int h = horizon;
    check_count(mu_s, h, "mu_s");
    check_count(mu_a, h - 1, "mu_a");
    check_count(beta_s, h - 1, "beta_s");
    check_count(beta_a, h - 1, "beta_a");
    check_count(theta, h - 1, "theta");
    check_count(m, h, "m");
    check_count(b, h, "b");
    check_count(c, h, "c");
    for (int t = 0; t < h; ++t) {
        require(mu_s[t].size() == d_s, "mu_s entry size mismatch");
        require(b[t].size() == d_a, "b entry size mismatch");
        require(c[t].size() == d_s, "c entry size mismatch");
    }
    for (int t = 0; t < h - 1; ++t) {
        require(mu_a[t].size() == d_a, "mu_a entry size mismatch");
        require(beta_s[t].rows() == d_s && beta_s[t].cols() == d_s,
                "beta_s must be d_s x d_s");
        require(beta_a[t].rows() == d_a && beta_a[t].cols() == d_s,
                "beta_a must be d_a x d_s");
        require(theta[t].rows() == d_s && theta[t].cols() == d_a,
                "theta must be d_s x d_a");
    }
    require(V.rows() == input_count() && V.cols() == input_count(),
            "V must be d_e x d_e with d_e = d_s * horizon");
}

PathwayDecomposition decompose(const LinearDynamics& dyn) {
    dyn.validate();
    const int h = dyn.horizon;
    const int d_s = dyn.d_s;

    PathwayDecomposition dec;
    dec.alpha.resize(h);
    // Per-period sensitivity of r_t to the state deviation (s_t - mu_s[t]):
    // r_t = const + (b_t theta_t^T + c_t)(s_t - mu_s[t]) for t < H, and the
    // final period has no action.
    for (int t = 0; t < h - 1; ++t) {
        dec.alpha[t] = dyn.b[t].transpose() * dyn.theta[t].transpose() +
                       dyn.c[t].transpose();
    }
    dec.alpha[h - 1] = dyn.c[h - 1].transpose();

    dec.gamma = 0.0;
    for (int t = 0; t < h - 1; ++t) {
        dec.gamma += dyn.m[t] + dyn.b[t].dot(dyn.mu_a[t]) +
                     dyn.c[t].dot(dyn.mu_s[t]);
    }
    dec.gamma += dyn.m[h - 1] + dyn.c[h - 1].dot(dyn.mu_s[h - 1]);

    // Closed-loop transition of the deviation: A_t = beta_s^T + beta_a^T theta^T.
    std::vector<Eigen::MatrixXd> a_mats(h - 1);
    for (int t = 0; t < h - 1; ++t) {
        a_mats[t] = dyn.beta_s[t].transpose() +
                    dyn.beta_a[t].transpose() * dyn.theta[t].transpose();
    }

    // Block t' of R sums alpha_t A_{t-1} ... A_{t'} over t >= t'.
    dec.R.resize(d_s * h);
    for (int tp = 1; tp <= h; ++tp) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d_s);
        Eigen::MatrixXd chain = Eigen::MatrixXd::Identity(d_s, d_s);
        for (int t = tp; t <= h; ++t) {
            acc += dec.alpha[t - 1] * chain;
            if (t < h) chain = a_mats[t - 1] * chain;
        }
        dec.R.segment(static_cast<Eigen::Index>(tp - 1) * d_s, d_s) = acc;
    }
    return dec;
}

double analytic_variance(const PathwayDecomposition& dec,
                         const Eigen::MatrixXd& V) {
    if (V.rows() != dec.R.size() || V.cols() != dec.R.size()) {
        throw ConfigError("analytic variance: V shape does not match R");
    }
    return dec.R * V * dec.R.transpose();
}

double analytic_value_function(const PathwayDecomposition& dec,
                               const Eigen::MatrixXd& V, SubsetMask subset) {
    const int d_e = static_cast<int>(dec.R.size());
    if (V.rows() != d_e || V.cols() != d_e) {
        throw ConfigError("analytic value function: V shape does not match R");
    }
    if (subset == 0) return 0.0;
    if (subset == full_mask(d_e)) return analytic_variance(dec, V);

    std::vector<int> in = mask_indices(subset);
    std::vector<int> out;
    for (int i = 0; i < d_e; ++i)
        if (!mask_contains(subset, i)) out.push_back(i);

    const int du = static_cast<int>(in.size());
    const int dc = static_cast<int>(out.size());
    Eigen::MatrixXd sigma_u(du, du), cross_uc(du, dc);
    Eigen::RowVectorXd r_u(du), r_c(dc);
    for (int a = 0; a < du; ++a) {
        r_u[a] = dec.R[in[a]];
        for (int b = 0; b < du; ++b) sigma_u(a, b) = V(in[a], in[b]);
        for (int b = 0; b < dc; ++b) cross_uc(a, b) = V(in[a], out[b]);
    }
    for (int b = 0; b < dc; ++b) r_c[b] = dec.R[out[b]];

    Eigen::MatrixXd l = cholesky_with_jitter(sigma_u, "value function");
    // solve Sigma_U m = Sigma_{U,-U}
    Eigen::MatrixXd msol = l.triangularView<Eigen::Lower>().solve(cross_uc);
    l.triangularView<Eigen::Lower>().transpose().solveInPlace(msol);
    Eigen::RowVectorXd u = r_c * msol.transpose() + r_u;
    const double g = u * sigma_u * u.transpose();

    const double var_y = analytic_variance(dec, V);
    if (g < -1e-12 * var_y) {
        throw Error("analytic value function returned " + std::to_string(g) +
                    " (< -1e-12 * Var(Y)); covariance is misconfigured");
    }
    return g;
}

LinearModel::LinearModel(LinearDynamics dyn) : dyn_(std::move(dyn)) {
    dyn_.validate();
    law_ = ResidualLaw(dyn_.V);
}

void LinearModel::initial_state(Eigen::Ref<const Eigen::VectorXd> e1,
                                Eigen::VectorXd& s) const {
    s = dyn_.mu_s[0] + e1;
}

void LinearModel::policy_action(int t, const Eigen::VectorXd& s,
                                Eigen::VectorXd& a) const {
    a = dyn_.mu_a[t - 1];
    a.noalias() += dyn_.theta[t - 1].transpose() * (s - dyn_.mu_s[t - 1]);
}

void LinearModel::step(int t, const Eigen::VectorXd& s,
                       const Eigen::VectorXd& a,
                       Eigen::Ref<const Eigen::VectorXd> e_next,
                       Eigen::VectorXd& s_next) const {
    s_next = dyn_.mu_s[t];
    s_next.noalias() += dyn_.beta_s[t - 1].transpose() * (s - dyn_.mu_s[t - 1]);
    s_next.noalias() += dyn_.beta_a[t - 1].transpose() * (a - dyn_.mu_a[t - 1]);
    s_next += e_next;
}

double LinearModel::reward(int t, const Eigen::VectorXd& s,
                           const Eigen::VectorXd& a) const {
    double r = dyn_.m[t - 1] + dyn_.c[t - 1].dot(s);
    if (a.size() > 0) r += dyn_.b[t - 1].dot(a);
    return r;
}

ParameterSlot parse_parameter_slot(const std::string& name) {
    static const std::regex pattern(
        R"(^([a-zA-Z_]+)\[(\d+)\](?:\[(\d+)\])?(?:\[(\d+)\])?$)");
    std::smatch match;
    if (!std::regex_match(name, match, pattern)) {
        throw ConfigError("unparseable parameter slot '" + name + "'");
    }
    const std::string field = match[1];
    const int idx1 = std::stoi(match[2]);
    const int idx2 = match[3].matched ? std::stoi(match[3]) : 0;
    const int idx3 = match[4].matched ? std::stoi(match[4]) : 0;
    const int count = 1 + (match[3].matched ? 1 : 0) + (match[4].matched ? 1 : 0);

    ParameterSlot slot;
    slot.text = name;
    auto need = [&](int n) {
        if (count != n) {
            throw ConfigError("slot '" + name + "' must have " +
                              std::to_string(n) + " indices");
        }
    };
    if (field == "mu_s") { need(2); slot.field = ParameterSlot::Field::MuS; }
    else if (field == "mu_a") { need(2); slot.field = ParameterSlot::Field::MuA; }
    else if (field == "beta_s") { need(3); slot.field = ParameterSlot::Field::BetaS; }
    else if (field == "beta_a") { need(3); slot.field = ParameterSlot::Field::BetaA; }
    else if (field == "theta") { need(3); slot.field = ParameterSlot::Field::Theta; }
    else if (field == "m") { need(1); slot.field = ParameterSlot::Field::M; }
    else if (field == "b") { need(2); slot.field = ParameterSlot::Field::B; }
    else if (field == "c") { need(2); slot.field = ParameterSlot::Field::C; }
    else if (field == "V") { need(2); slot.field = ParameterSlot::Field::V; }
    else {
        throw ConfigError("unknown parameter field '" + field + "' in slot '" +
                          name + "'");
    }
    if (idx1 < 1 || (count >= 2 && idx2 < 1) || (count >= 3 && idx3 < 1)) {
        throw ConfigError("slot '" + name + "' indices are 1-based");
    }
    slot.t = idx1 - 1;
    slot.r = idx2 - 1;
    slot.c = idx3 - 1;
    return slot;
}

namespace {

double* slot_address(LinearDynamics& dyn, const ParameterSlot& s) {
    auto at = [&](auto& seq, int i, const char* what) -> decltype(&seq[0]) {
        if (i < 0 || i >= static_cast<int>(seq.size())) {
            throw ConfigError("slot '" + s.text + "': " + what +
                              " index out of range");
        }
        return &seq[i];
    };
    switch (s.field) {
        case ParameterSlot::Field::MuS: {
            auto* v = at(dyn.mu_s, s.t, "period");
            if (s.r < 0 || s.r >= v->size())
                throw ConfigError("slot '" + s.text + "': component out of range");
            return &(*v)[s.r];
        }
        case ParameterSlot::Field::MuA: {
            auto* v = at(dyn.mu_a, s.t, "period");
            if (s.r < 0 || s.r >= v->size())
                throw ConfigError("slot '" + s.text + "': component out of range");
            return &(*v)[s.r];
        }
        case ParameterSlot::Field::BetaS: {
            auto* mat = at(dyn.beta_s, s.t, "period");
            if (s.r < 0 || s.r >= mat->rows() || s.c < 0 || s.c >= mat->cols())
                throw ConfigError("slot '" + s.text + "': entry out of range");
            return &(*mat)(s.r, s.c);
        }
        case ParameterSlot::Field::BetaA: {
            auto* mat = at(dyn.beta_a, s.t, "period");
            if (s.r < 0 || s.r >= mat->rows() || s.c < 0 || s.c >= mat->cols())
                throw ConfigError("slot '" + s.text + "': entry out of range");
            return &(*mat)(s.r, s.c);
        }
        case ParameterSlot::Field::Theta: {
            auto* mat = at(dyn.theta, s.t, "period");
            if (s.r < 0 || s.r >= mat->rows() || s.c < 0 || s.c >= mat->cols())
                throw ConfigError("slot '" + s.text + "': entry out of range");
            return &(*mat)(s.r, s.c);
        }
        case ParameterSlot::Field::M:
            return at(dyn.m, s.t, "period");
        case ParameterSlot::Field::B: {
            auto* v = at(dyn.b, s.t, "period");
            if (s.r < 0 || s.r >= v->size())
                throw ConfigError("slot '" + s.text + "': component out of range");
            return &(*v)[s.r];
        }
        case ParameterSlot::Field::C: {
            auto* v = at(dyn.c, s.t, "period");
            if (s.r < 0 || s.r >= v->size())
                throw ConfigError("slot '" + s.text + "': component out of range");
            return &(*v)[s.r];
        }
        case ParameterSlot::Field::V: {
            if (s.t < 0 || s.t >= dyn.V.rows() || s.r < 0 || s.r >= dyn.V.cols())
                throw ConfigError("slot '" + s.text + "': entry out of range");
            return &dyn.V(s.t, s.r);
        }
    }
    throw ConfigError("slot '" + s.text + "': unhandled field");
}

} // namespace

LinearDynamics embed_parameters(const LinearDynamics& base,
                                const std::vector<ParameterSlot>& slots,
                                const Eigen::VectorXd& w) {
    if (w.size() != static_cast<Eigen::Index>(slots.size())) {
        throw ConfigError("parameter vector size " + std::to_string(w.size()) +
                          " does not match slot count " +
                          std::to_string(slots.size()));
    }
    LinearDynamics dyn = base;
    bool touched_v = false;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        *slot_address(dyn, slots[i]) = w[static_cast<Eigen::Index>(i)];
        if (slots[i].field == ParameterSlot::Field::V) {
            // keep V symmetric: mirror the entry
            dyn.V(slots[i].r, slots[i].t) = w[static_cast<Eigen::Index>(i)];
            touched_v = true;
        }
    }
    if (touched_v) dyn.V = psd_project(dyn.V);
    return dyn;
}

Eigen::VectorXd extract_parameters(const LinearDynamics& dyn,
                                   const std::vector<ParameterSlot>& slots) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(slots.size()));
    LinearDynamics copy = dyn; // slot_address needs mutable access
    for (std::size_t i = 0; i < slots.size(); ++i) {
        w[static_cast<Eigen::Index>(i)] = *slot_address(copy, slots[i]);
    }
    return w;
}

LinearFamily::LinearFamily(LinearDynamics base, OutputSelector output)
    : base_(std::move(base)), output_(output) {
    base_.validate();
    fixed_model_ = std::make_shared<LinearModel>(base_);
}

LinearFamily::LinearFamily(LinearDynamics base, OutputSelector output,
                           std::vector<ParameterSlot> slots,
                           Eigen::VectorXd mean,
                           const Eigen::MatrixXd& covariance)
    : base_(std::move(base)),
      output_(output),
      slots_(std::move(slots)),
      posterior_(std::move(mean), covariance) {
    base_.validate();
    if (posterior_.dimension() != static_cast<int>(slots_.size())) {
        throw ConfigError("posterior dimension " +
                          std::to_string(posterior_.dimension()) +
                          " does not match slot count " +
                          std::to_string(slots_.size()));
    }
    // Validate every slot address up-front.
    (void)extract_parameters(base_, slots_);
}

Eigen::VectorXd LinearFamily::draw_parameters(RngStream& rng) const {
    if (posterior_dim() == 0) return Eigen::VectorXd(0);
    return posterior_.sample(rng);
}

Eigen::VectorXd LinearFamily::parameters_from_normals(
    const Eigen::VectorXd& z) const {
    if (posterior_dim() == 0) return Eigen::VectorXd(0);
    return posterior_.from_normals(z);
}

LinearDynamics LinearFamily::dynamics_for(const Eigen::VectorXd& w) const {
    if (posterior_dim() == 0) return base_;
    return embed_parameters(base_, slots_, w);
}

std::shared_ptr<const PabnModel> LinearFamily::instantiate(
    const Eigen::VectorXd& w) const {
    if (posterior_dim() == 0) return fixed_model_;
    return std::make_shared<LinearModel>(dynamics_for(w));
}

} // namespace sopabn
