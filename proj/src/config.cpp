#include "sopabn/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "sopabn/errors.hpp"

namespace sopabn {
namespace {

using nlohmann::json;

// Object accessor that records which keys were consumed so that leftovers
// can be reported as unknown keys with their full path.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path)
        : obj_(j), path_(std::move(path)) {
        if (!j.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    const json* find(const char* key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const json& at(const char* key) {
        const json* p = find(key);
        if (p == nullptr) {
            throw ConfigError(path_ + ": missing required key \"" +
                              std::string(key) + "\"");
        }
        return *p;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (seen_.count(it.key()) == 0) {
                throw ConfigError(path_ + ": unknown key \"" + it.key() +
                                  "\"");
            }
        }
    }

    std::string sub(const char* key) const {
        return path_ + "." + std::string(key);
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

double as_double(const json& j, const std::string& path) {
    if (!j.is_number()) {
        throw ConfigError(path + ": expected a number");
    }
    return j.get<double>();
}

long long as_int(const json& j, const std::string& path) {
    if (j.is_number_integer() || j.is_number_unsigned()) {
        return j.get<long long>();
    }
    if (j.is_number_float()) {
        const double v = j.get<double>();
        if (std::floor(v) == v && std::abs(v) < 9.0e18) {
            return static_cast<long long>(v);
        }
    }
    throw ConfigError(path + ": expected an integer");
}

std::uint64_t as_uint64(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) {
        return j.get<std::uint64_t>();
    }
    if (j.is_number_integer()) {
        const long long v = j.get<long long>();
        if (v < 0) {
            throw ConfigError(path + ": expected a nonnegative integer");
        }
        return static_cast<std::uint64_t>(v);
    }
    throw ConfigError(path + ": expected a nonnegative integer");
}

bool as_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) {
        throw ConfigError(path + ": expected a boolean");
    }
    return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) {
        throw ConfigError(path + ": expected a string");
    }
    return j.get<std::string>();
}

Eigen::VectorXd as_vector(const json& j, const std::string& path,
                          int expected = -1) {
    if (!j.is_array()) {
        throw ConfigError(path + ": expected an array of numbers");
    }
    if (expected >= 0 && static_cast<int>(j.size()) != expected) {
        throw ConfigError(path + ": expected " + std::to_string(expected) +
                          " entries, got " + std::to_string(j.size()));
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] =
            as_double(j[i], path + "[" + std::to_string(i) + "]");
    }
    return v;
}

Eigen::MatrixXd as_matrix(const json& j, const std::string& path,
                          int rows = -1, int cols = -1) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError(path + ": expected a nonempty array of rows");
    }
    if (rows >= 0 && static_cast<int>(j.size()) != rows) {
        throw ConfigError(path + ": expected " + std::to_string(rows) +
                          " rows, got " + std::to_string(j.size()));
    }
    Eigen::MatrixXd m;
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Eigen::VectorXd row =
            as_vector(j[r], path + "[" + std::to_string(r) + "]", cols);
        if (r == 0) {
            m.resize(static_cast<Eigen::Index>(j.size()), row.size());
        } else if (row.size() != m.cols()) {
            throw ConfigError(path + ": rows have inconsistent lengths");
        }
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows.push_back(vector_to_json(m.row(r).transpose()));
    }
    return rows;
}

// ---- model block -----------------------------------------------------------

void parse_linear_model(ObjectReader& model, ExperimentConfig& config) {
    config.model_kind = ExperimentConfig::ModelKind::Linear;
    LinearDynamics& dyn = config.linear;
    dyn.d_s = static_cast<int>(as_int(model.at("d_s"), model.sub("d_s")));
    dyn.d_a = static_cast<int>(as_int(model.at("d_a"), model.sub("d_a")));
    dyn.horizon =
        static_cast<int>(as_int(model.at("horizon"), model.sub("horizon")));
    if (dyn.d_s < 1 || dyn.d_a < 1 || dyn.horizon < 1) {
        throw ConfigError("model: d_s, d_a, and horizon must be positive");
    }
    const int h = dyn.horizon;

    auto vector_list = [&](const char* key, int count,
                           int size) -> std::vector<Eigen::VectorXd> {
        const json& arr = model.at(key);
        const std::string path = model.sub(key);
        if (!arr.is_array() || static_cast<int>(arr.size()) != count) {
            throw ConfigError(path + ": expected " + std::to_string(count) +
                              " entries");
        }
        std::vector<Eigen::VectorXd> out;
        out.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            out.push_back(as_vector(arr[static_cast<std::size_t>(i)],
                                    path + "[" + std::to_string(i) + "]",
                                    size));
        }
        return out;
    };
    auto matrix_list = [&](const char* key, int count, int rows,
                           int cols) -> std::vector<Eigen::MatrixXd> {
        const json& arr = model.at(key);
        const std::string path = model.sub(key);
        if (!arr.is_array() || static_cast<int>(arr.size()) != count) {
            throw ConfigError(path + ": expected " + std::to_string(count) +
                              " entries");
        }
        std::vector<Eigen::MatrixXd> out;
        out.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            out.push_back(as_matrix(arr[static_cast<std::size_t>(i)],
                                    path + "[" + std::to_string(i) + "]", rows,
                                    cols));
        }
        return out;
    };

    dyn.mu_s = vector_list("mu_s", h, dyn.d_s);
    dyn.mu_a = vector_list("mu_a", h - 1, dyn.d_a);
    dyn.beta_s = matrix_list("beta_s", h - 1, dyn.d_s, dyn.d_s);
    dyn.beta_a = matrix_list("beta_a", h - 1, dyn.d_a, dyn.d_s);
    dyn.theta = matrix_list("theta", h - 1, dyn.d_s, dyn.d_a);
    {
        const Eigen::VectorXd mv = as_vector(model.at("m"), model.sub("m"), h);
        dyn.m.assign(mv.data(), mv.data() + mv.size());
    }
    dyn.b = vector_list("b", h, dyn.d_a);
    dyn.c = vector_list("c", h, dyn.d_s);
    dyn.V = as_matrix(model.at("V"), model.sub("V"), dyn.input_count(),
                      dyn.input_count());

    if (const json* post = model.find("posterior")) {
        ObjectReader reader(*post, model.sub("posterior"));
        const json& slots = reader.at("slots");
        const std::string slots_path = reader.sub("slots");
        if (!slots.is_array() || slots.empty()) {
            throw ConfigError(slots_path + ": expected a nonempty array");
        }
        config.posterior_slots.clear();
        for (std::size_t i = 0; i < slots.size(); ++i) {
            config.posterior_slots.push_back(parse_parameter_slot(as_string(
                slots[i], slots_path + "[" + std::to_string(i) + "]")));
        }
        const int d = static_cast<int>(config.posterior_slots.size());
        config.posterior_mean = as_vector(reader.at("mean"),
                                          reader.sub("mean"), d);
        config.posterior_covariance =
            as_matrix(reader.at("covariance"), reader.sub("covariance"), d, d);
        config.has_posterior = true;
        reader.finish();
    }
    dyn.validate();
}

void parse_feedback_model(ObjectReader& model, ExperimentConfig& config) {
    config.model_kind = ExperimentConfig::ModelKind::Feedback;
    FeedbackParams& p = config.feedback;
    PhCorrelation& corr = config.correlation;
    DilutionPolicy& policy = config.dilution;

    auto opt_double = [&](const char* key, double& slot) {
        if (const json* j = model.find(key)) {
            slot = as_double(*j, model.sub(key));
        }
    };
    opt_double("r_g", p.r_g);
    opt_double("r_c", p.r_c);
    opt_double("r_d", p.r_d);
    opt_double("r_p", p.r_p);
    opt_double("a", p.a);
    opt_double("b", p.b);
    opt_double("period", p.period);
    opt_double("step", p.step);
    if (const json* j = model.find("horizon")) {
        p.horizon = static_cast<int>(as_int(*j, model.sub("horizon")));
    }
    if (const json* j = model.find("initial")) {
        p.initial = as_vector(*j, model.sub("initial"), 3);
    }
    if (const json* j = model.find("l")) {
        corr.l = as_vector(*j, model.sub("l"), 3);
    }
    opt_double("sigma_ph2", corr.sigma_ph2);
    if (const json* j = model.find("sigma_idio2")) {
        corr.sigma_idio2 = as_vector(*j, model.sub("sigma_idio2"), 3);
    }
    opt_double("fraction", policy.fraction);
    opt_double("c_dil", policy.c_dil);
    opt_double("c_p", policy.c_p);

    p.validate();
    corr.validate();
    policy.validate();
}

// ---- algorithm / output / experiment blocks --------------------------------

void parse_output(const json& j, const std::string& path,
                  ExperimentConfig& config) {
    ObjectReader reader(j, path);
    const std::string kind = as_string(reader.at("kind"), reader.sub("kind"));
    if (kind == "cumulative_reward") {
        config.output.kind = OutputSelector::Kind::CumulativeReward;
    } else if (kind == "state_component") {
        config.output.kind = OutputSelector::Kind::StateComponent;
        config.output.period = static_cast<int>(
            as_int(reader.at("period"), reader.sub("period")));
        config.output.component = static_cast<int>(
            as_int(reader.at("component"), reader.sub("component")));
    } else {
        throw ConfigError(path + ": unknown output kind \"" + kind + "\"");
    }
    reader.finish();
}

void parse_algorithm(const json& j, const std::string& path,
                     ExperimentConfig& config) {
    ObjectReader reader(j, path);
    const std::string kind = as_string(reader.at("kind"), reader.sub("kind"));
    if (kind == "nested") {
        config.algorithm_kind = ExperimentConfig::AlgorithmKind::Nested;
        NestedBudget& b = config.nested;
        b.k_outer = as_int(reader.at("parameter_draws"),
                           reader.sub("parameter_draws"));
        b.m_inner = as_int(reader.at("permutations_per_draw"),
                           reader.sub("permutations_per_draw"));
        b.n_outer = static_cast<int>(
            as_int(reader.at("outer_draws"), reader.sub("outer_draws")));
        b.n_inner = static_cast<int>(
            as_int(reader.at("inner_draws"), reader.sub("inner_draws")));
        b.validate();
    } else if (kind == "sequential") {
        config.algorithm_kind = ExperimentConfig::AlgorithmKind::Sequential;
        AllocationOptions& o = config.sequential;
        if (const json* v = reader.find("iterations")) {
            o.iterations = as_int(*v, reader.sub("iterations"));
        }
        if (const json* v = reader.find("pilot_iterations")) {
            o.pilot_iterations = as_int(*v, reader.sub("pilot_iterations"));
        }
        if (const json* v = reader.find("group_size")) {
            o.group_size =
                static_cast<int>(as_int(*v, reader.sub("group_size")));
        }
        if (const json* v = reader.find("alpha")) {
            o.alpha = as_double(*v, reader.sub("alpha"));
        }
        if (const json* v = reader.find("sampler")) {
            const std::string s = as_string(*v, reader.sub("sampler"));
            if (s == "mc") {
                o.qmc = false;
            } else if (s == "qmc") {
                o.qmc = true;
            } else {
                throw ConfigError(reader.sub("sampler") +
                                  ": expected \"mc\" or \"qmc\"");
            }
        }
        if (const json* v = reader.find("scramble")) {
            o.scramble = as_bool(*v, reader.sub("scramble"));
        }
        if (const json* v = reader.find("freeze_sigma")) {
            o.freeze_sigma = as_bool(*v, reader.sub("freeze_sigma"));
        }
        if (const json* v = reader.find("simulation_budget")) {
            o.simulation_budget = as_int(*v, reader.sub("simulation_budget"));
        }
        if (const json* v = reader.find("pilot_fraction")) {
            o.pilot_fraction = as_double(*v, reader.sub("pilot_fraction"));
        }
        o.validate();
    } else {
        throw ConfigError(path + ": unknown algorithm kind \"" + kind + "\"");
    }
    reader.finish();
}

std::array<double, 4> as_ratio(const json& j, const std::string& path) {
    const Eigen::VectorXd v = as_vector(j, path, 4);
    std::array<double, 4> ratio{v[0], v[1], v[2], v[3]};
    for (double r : ratio) {
        if (!(r > 0.0)) {
            throw ConfigError(path + ": ratio entries must be positive");
        }
    }
    return ratio;
}

void parse_ablation(const json& j, const std::string& path,
                    ExperimentConfig& config) {
    ObjectReader reader(j, path);
    auto& spec = config.ablation;
    spec.present = true;
    spec.macro_replications = config.macro_replications;
    const json& ratios = reader.at("ratios");
    const std::string rpath = reader.sub("ratios");
    if (!ratios.is_array() || ratios.empty()) {
        throw ConfigError(rpath + ": expected a nonempty array of ratios");
    }
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        spec.ratios.push_back(
            as_ratio(ratios[i], rpath + "[" + std::to_string(i) + "]"));
    }
    spec.budget = as_int(reader.at("budget"), reader.sub("budget"));
    if (spec.budget < 1) {
        throw ConfigError(reader.sub("budget") + ": must be positive");
    }
    if (const json* v = reader.find("macro_replications")) {
        spec.macro_replications =
            static_cast<int>(as_int(*v, reader.sub("macro_replications")));
    }
    if (spec.macro_replications < 1) {
        throw ConfigError(reader.sub("macro_replications") +
                          ": must be positive");
    }
    reader.finish();
}

void parse_compare(const json& j, const std::string& path,
                   ExperimentConfig& config) {
    ObjectReader reader(j, path);
    auto& spec = config.compare;
    spec.present = true;
    spec.macro_replications = config.macro_replications;
    const json& budgets = reader.at("budgets");
    const std::string bpath = reader.sub("budgets");
    if (!budgets.is_array() || budgets.empty()) {
        throw ConfigError(bpath + ": expected a nonempty array of budgets");
    }
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        const long long b =
            as_int(budgets[i], bpath + "[" + std::to_string(i) + "]");
        if (b < 1) {
            throw ConfigError(bpath + ": budgets must be positive");
        }
        spec.budgets.push_back(b);
    }
    if (const json* v = reader.find("ratio")) {
        spec.ratio = as_ratio(*v, reader.sub("ratio"));
    }
    if (const json* v = reader.find("samplers")) {
        const std::string spath = reader.sub("samplers");
        if (!v->is_array() || v->empty()) {
            throw ConfigError(spath + ": expected a nonempty array");
        }
        spec.samplers.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
            const std::string s =
                as_string((*v)[i], spath + "[" + std::to_string(i) + "]");
            if (s != "mc" && s != "qmc") {
                throw ConfigError(spath + ": expected \"mc\" or \"qmc\"");
            }
            spec.samplers.push_back(s);
        }
    }
    if (const json* v = reader.find("macro_replications")) {
        spec.macro_replications =
            static_cast<int>(as_int(*v, reader.sub("macro_replications")));
    }
    if (spec.macro_replications < 1) {
        throw ConfigError(reader.sub("macro_replications") +
                          ": must be positive");
    }
    reader.finish();
}

void parse_dependence(const json& j, const std::string& path,
                      ExperimentConfig& config) {
    ObjectReader reader(j, path);
    auto& spec = config.dependence;
    spec.present = true;
    spec.macro_replications = config.macro_replications;
    const json& levels = reader.at("levels");
    const std::string lpath = reader.sub("levels");
    if (!levels.is_array() || levels.empty()) {
        throw ConfigError(lpath + ": expected a nonempty array of levels");
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const std::string epath = lpath + "[" + std::to_string(i) + "]";
        ObjectReader level(levels[i], epath);
        Eigen::Vector3d l = as_vector(level.at("l"), level.sub("l"), 3);
        std::string name = "level" + std::to_string(i);
        if (const json* v = level.find("name")) {
            name = as_string(*v, level.sub("name"));
        }
        level.finish();
        spec.levels.push_back(l);
        spec.names.push_back(std::move(name));
    }
    if (const json* v = reader.find("simulation_budget")) {
        spec.simulation_budget = as_int(*v, reader.sub("simulation_budget"));
    }
    if (spec.simulation_budget < 1) {
        throw ConfigError(reader.sub("simulation_budget") +
                          ": must be positive");
    }
    if (const json* v = reader.find("macro_replications")) {
        spec.macro_replications =
            static_cast<int>(as_int(*v, reader.sub("macro_replications")));
    }
    if (spec.macro_replications < 1) {
        throw ConfigError(reader.sub("macro_replications") +
                          ": must be positive");
    }
    reader.finish();
}

int model_state_dim(const ExperimentConfig& config) {
    return config.model_kind == ExperimentConfig::ModelKind::Linear
               ? config.linear.d_s
               : 3;
}

int model_horizon(const ExperimentConfig& config) {
    return config.model_kind == ExperimentConfig::ModelKind::Linear
               ? config.linear.horizon
               : config.feedback.horizon;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& err) {
        throw ConfigError(std::string("config: invalid JSON: ") + err.what());
    }

    ExperimentConfig config;
    ObjectReader top(root, "config");

    {
        ObjectReader model(top.at("model"), "config.model");
        const std::string kind =
            as_string(model.at("kind"), model.sub("kind"));
        if (kind == "linear") {
            parse_linear_model(model, config);
        } else if (kind == "feedback") {
            parse_feedback_model(model, config);
        } else {
            throw ConfigError("config.model: unknown kind \"" + kind + "\"");
        }
        model.finish();
    }

    if (const json* j = top.find("output")) {
        parse_output(*j, "config.output", config);
    }
    if (config.output.kind == OutputSelector::Kind::StateComponent) {
        if (config.output.period < 1 ||
            config.output.period > model_horizon(config)) {
            throw ConfigError("config.output.period: out of range");
        }
        if (config.output.component < 1 ||
            config.output.component > model_state_dim(config)) {
            throw ConfigError("config.output.component: out of range");
        }
    }

    parse_algorithm(top.at("algorithm"), "config.algorithm", config);

    if (const json* j = top.find("seed")) {
        config.seed = as_uint64(*j, "config.seed");
    }
    if (const json* j = top.find("macro_replications")) {
        config.macro_replications =
            static_cast<int>(as_int(*j, "config.macro_replications"));
        if (config.macro_replications < 1) {
            throw ConfigError("config.macro_replications: must be positive");
        }
    }
    if (const json* j = top.find("truth")) {
        ObjectReader truth(*j, "config.truth");
        config.has_truth = true;
        if (const json* v = truth.find("parameter_draws")) {
            config.k_truth = as_int(*v, truth.sub("parameter_draws"));
            if (config.k_truth < 1) {
                throw ConfigError(truth.sub("parameter_draws") +
                                  ": must be positive");
            }
        }
        truth.finish();
        if (config.model_kind != ExperimentConfig::ModelKind::Linear) {
            throw ConfigError("config.truth: exact reference values are only "
                              "available for the linear model");
        }
    }
    if (const json* j = top.find("ablation")) {
        parse_ablation(*j, "config.ablation", config);
    }
    if (const json* j = top.find("compare")) {
        parse_compare(*j, "config.compare", config);
    }
    if (const json* j = top.find("dependence")) {
        parse_dependence(*j, "config.dependence", config);
        if (config.model_kind != ExperimentConfig::ModelKind::Feedback) {
            throw ConfigError("config.dependence: requires the feedback "
                              "model");
        }
    }
    top.finish();

    // Surface model-construction problems (bad posterior slots, indefinite
    // covariances) at parse time rather than mid-run.
    config.make_family();
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("config: cannot open \"" + path + "\"");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string serialize_config(const ExperimentConfig& config) {
    json root;

    json model;
    if (config.model_kind == ExperimentConfig::ModelKind::Linear) {
        const LinearDynamics& dyn = config.linear;
        model["kind"] = "linear";
        model["d_s"] = dyn.d_s;
        model["d_a"] = dyn.d_a;
        model["horizon"] = dyn.horizon;
        auto vectors = [](const std::vector<Eigen::VectorXd>& vs) {
            json a = json::array();
            for (const auto& v : vs) {
                a.push_back(vector_to_json(v));
            }
            return a;
        };
        auto matrices = [](const std::vector<Eigen::MatrixXd>& ms) {
            json a = json::array();
            for (const auto& m : ms) {
                a.push_back(matrix_to_json(m));
            }
            return a;
        };
        model["mu_s"] = vectors(dyn.mu_s);
        model["mu_a"] = vectors(dyn.mu_a);
        model["beta_s"] = matrices(dyn.beta_s);
        model["beta_a"] = matrices(dyn.beta_a);
        model["theta"] = matrices(dyn.theta);
        model["m"] = dyn.m;
        model["b"] = vectors(dyn.b);
        model["c"] = vectors(dyn.c);
        model["V"] = matrix_to_json(dyn.V);
        if (config.has_posterior) {
            json post;
            json slots = json::array();
            for (const auto& slot : config.posterior_slots) {
                slots.push_back(slot.text);
            }
            post["slots"] = std::move(slots);
            post["mean"] = vector_to_json(config.posterior_mean);
            post["covariance"] = matrix_to_json(config.posterior_covariance);
            model["posterior"] = std::move(post);
        }
    } else {
        const FeedbackParams& p = config.feedback;
        model["kind"] = "feedback";
        model["r_g"] = p.r_g;
        model["r_c"] = p.r_c;
        model["r_d"] = p.r_d;
        model["r_p"] = p.r_p;
        model["a"] = p.a;
        model["b"] = p.b;
        model["period"] = p.period;
        model["step"] = p.step;
        model["horizon"] = p.horizon;
        model["initial"] = vector_to_json(p.initial);
        model["l"] = vector_to_json(config.correlation.l);
        model["sigma_ph2"] = config.correlation.sigma_ph2;
        model["sigma_idio2"] = vector_to_json(config.correlation.sigma_idio2);
        model["fraction"] = config.dilution.fraction;
        model["c_dil"] = config.dilution.c_dil;
        model["c_p"] = config.dilution.c_p;
    }
    root["model"] = std::move(model);

    json output;
    if (config.output.kind == OutputSelector::Kind::CumulativeReward) {
        output["kind"] = "cumulative_reward";
    } else {
        output["kind"] = "state_component";
        output["period"] = config.output.period;
        output["component"] = config.output.component;
    }
    root["output"] = std::move(output);

    json alg;
    if (config.algorithm_kind == ExperimentConfig::AlgorithmKind::Nested) {
        alg["kind"] = "nested";
        alg["parameter_draws"] = config.nested.k_outer;
        alg["permutations_per_draw"] = config.nested.m_inner;
        alg["outer_draws"] = config.nested.n_outer;
        alg["inner_draws"] = config.nested.n_inner;
    } else {
        const AllocationOptions& o = config.sequential;
        alg["kind"] = "sequential";
        alg["iterations"] = o.iterations;
        alg["pilot_iterations"] = o.pilot_iterations;
        alg["group_size"] = o.group_size;
        alg["alpha"] = o.alpha;
        alg["sampler"] = o.qmc ? "qmc" : "mc";
        alg["scramble"] = o.scramble;
        alg["freeze_sigma"] = o.freeze_sigma;
        alg["simulation_budget"] = o.simulation_budget;
        alg["pilot_fraction"] = o.pilot_fraction;
    }
    root["algorithm"] = std::move(alg);

    root["seed"] = config.seed;
    root["macro_replications"] = config.macro_replications;
    if (config.has_truth) {
        root["truth"] = json{{"parameter_draws", config.k_truth}};
    }
    if (config.ablation.present) {
        json ratios = json::array();
        for (const auto& r : config.ablation.ratios) {
            ratios.push_back(json{r[0], r[1], r[2], r[3]});
        }
        root["ablation"] = json{
            {"ratios", std::move(ratios)},
            {"budget", config.ablation.budget},
            {"macro_replications", config.ablation.macro_replications}};
    }
    if (config.compare.present) {
        const auto& c = config.compare;
        root["compare"] =
            json{{"budgets", c.budgets},
                 {"ratio", json{c.ratio[0], c.ratio[1], c.ratio[2],
                                c.ratio[3]}},
                 {"samplers", c.samplers},
                 {"macro_replications", c.macro_replications}};
    }
    if (config.dependence.present) {
        const auto& d = config.dependence;
        json levels = json::array();
        for (std::size_t i = 0; i < d.levels.size(); ++i) {
            levels.push_back(json{{"name", d.names[i]},
                                  {"l", vector_to_json(d.levels[i])}});
        }
        root["dependence"] =
            json{{"levels", std::move(levels)},
                 {"simulation_budget", d.simulation_budget},
                 {"macro_replications", d.macro_replications}};
    }
    return root.dump();
}

std::string config_fingerprint(const ExperimentConfig& config) {
    const std::string text = serialize_config(config);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::shared_ptr<ModelFamily> ExperimentConfig::make_family() const {
    if (model_kind == ModelKind::Linear) {
        if (has_posterior) {
            return std::make_shared<LinearFamily>(linear, output,
                                                  posterior_slots,
                                                  posterior_mean,
                                                  posterior_covariance);
        }
        return std::make_shared<LinearFamily>(linear, output);
    }
    return std::make_shared<FeedbackFamily>(feedback, correlation, dilution,
                                            output);
}

std::shared_ptr<ModelFamily> ExperimentConfig::make_family_with_loading(
    const Eigen::Vector3d& l) const {
    if (model_kind != ModelKind::Feedback) {
        throw ConfigError("pH-loading overrides require the feedback model");
    }
    PhCorrelation corr = correlation;
    corr.l = l;
    return std::make_shared<FeedbackFamily>(feedback, corr, dilution, output);
}

} // namespace sopabn
