#include "combtrack/config.hpp"

#include "combtrack/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace combtrack {

namespace {

using nlohmann::json;

// Reads one JSON object and rejects any key that was not asked for.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object()) throw ConfigError(label() + "must be a JSON object");
    }

    template <typename T>
    bool read(const char* key, T& out)
    {
        seen_.insert(key);
        if (!obj_.contains(key)) return false;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + qualified(key) + "' has the wrong type");
        }
        return true;
    }

    template <typename T>
    bool read(const char* key, std::optional<T>& out)
    {
        T value{};
        if (!read(key, value)) return false;
        out = value;
        return true;
    }

    /// A number or a list of numbers.
    bool read_list(const char* key, std::vector<double>& out)
    {
        seen_.insert(key);
        if (!obj_.contains(key)) return false;
        const auto& v = obj_.at(key);
        if (v.is_number()) {
            out = {v.get<double>()};
            return true;
        }
        return read(key, out);
    }

    std::optional<Section> child(const char* key)
    {
        seen_.insert(key);
        if (!obj_.contains(key)) return std::nullopt;
        return Section(obj_.at(key), qualified(key));
    }

    void finish() const
    {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.contains(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
        }
    }

private:
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string label() const { return path_.empty() ? "config " : "config section '" + path_ + "' "; }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& text, E (*parse)(const std::string&))
{
    try {
        return parse(text);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

} // namespace

void ExperimentConfig::validate() const
{
    if (comb.line_indices.empty()) throw ConfigError("comb.line_indices must not be empty");
    std::set<int> unique(comb.line_indices.begin(), comb.line_indices.end());
    if (unique.size() != comb.line_indices.size()) throw ConfigError("comb.line_indices contains duplicates");
    if (!(comb.spacing_hz > 0.0)) throw ConfigError("comb.spacing_hz must be > 0");
    if (!(comb.sample_rate_hz > 0.0)) throw ConfigError("comb.sample_rate_hz must be > 0");
    if (!(comb.amplitude > 0.0)) throw ConfigError("comb.amplitude must be > 0");
    if (!(noise.var_carrier >= 0.0) || !(noise.var_rf >= 0.0)) throw ConfigError("noise variances must be >= 0");
    if (noise.meas_var && !noise.snr_db.empty()) {
        throw ConfigError("set exactly one of noise.meas_var and noise.snr_db");
    }
    if (noise.meas_var && !(*noise.meas_var >= 0.0)) throw ConfigError("noise.meas_var must be >= 0");
    if (noise.process_cov) {
        const auto m = static_cast<Eigen::Index>(comb.line_indices.size());
        if (noise.process_cov->rows() != m || noise.process_cov->cols() != m) {
            throw ConfigError("noise.process_cov must be " + std::to_string(m) + "x" + std::to_string(m));
        }
        try {
            NoiseModel{*noise.process_cov, 0.0}.validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("noise.process_cov: ") + e.what());
        }
    }
    if (samples < 2) throw ConfigError("samples must be >= 2");
    if (method != "ml" && method != "conventional") {
        throw ConfigError("method must be ml or conventional, got '" + method + "'");
    }
    try {
        em.validate();
        baseline.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (!(init_linewidth_hz > 0.0)) throw ConfigError("em.init_linewidth_hz must be > 0");
    if (restarts < 1) throw ConfigError("em.restarts must be >= 1");
    if (ekf.init != "warm" && ekf.init != "zero") throw ConfigError("ekf.init must be warm or zero");
    if (!(ekf.init_phase_sd > 0.0)) throw ConfigError("ekf.init_phase_sd must be > 0");
    if (spectral.line_source != "psd" && spectral.line_source != "config") {
        throw ConfigError("spectral.line_source must be psd or config");
    }
    if (analysis.ml_correlation != "learned_q" && analysis.ml_correlation != "smoothed_increments") {
        throw ConfigError("analysis.ml_correlation must be learned_q or smoothed_increments");
    }
    if (!unique.contains(analysis.reference_index)) {
        throw ConfigError("analysis.reference_index " + std::to_string(analysis.reference_index) +
                          " is not a configured line");
    }
    if (figure.seeds && *figure.seeds < 1) throw ConfigError("figure.seeds must be >= 1");
    if (figure.samples && *figure.samples < 2) throw ConfigError("figure.samples must be >= 2");
    if ((figure.var_carrier && !(*figure.var_carrier >= 0.0)) || (figure.var_rf && !(*figure.var_rf >= 0.0))) {
        throw ConfigError("figure noise variances must be >= 0");
    }
}

ExperimentConfig parse_config(const std::string& json_text)
{
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    ExperimentConfig c;
    Section top(root, "");
    if (auto s = top.child("comb")) {
        int half_width = -1;
        const bool has_half = s->read("half_width", half_width);
        const bool has_list = s->read("line_indices", c.comb.line_indices);
        if (has_half && has_list) throw ConfigError("set only one of comb.half_width and comb.line_indices");
        if (has_half) {
            if (half_width < 0) throw ConfigError("comb.half_width must be >= 0");
            c.comb.line_indices = symmetric_line_indices(half_width);
        }
        s->read("spacing_hz", c.comb.spacing_hz);
        s->read("center_hz", c.comb.center_hz);
        s->read("sample_rate_hz", c.comb.sample_rate_hz);
        s->read("amplitude", c.comb.amplitude);
        s->finish();
    }
    if (auto s = top.child("noise")) {
        s->read("var_carrier", c.noise.var_carrier);
        s->read("var_rf", c.noise.var_rf);
        std::vector<std::vector<double>> rows;
        if (s->read("process_cov", rows)) {
            const auto m = static_cast<Eigen::Index>(rows.size());
            Eigen::MatrixXd q(m, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) {
                    throw ConfigError("noise.process_cov must be square");
                }
                for (Eigen::Index j = 0; j < m; ++j) q(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
            c.noise.process_cov = q;
        }
        s->read("meas_var", c.noise.meas_var);
        s->read_list("snr_db", c.noise.snr_db);
        s->finish();
    }
    top.read("samples", c.samples);
    top.read("seed", c.seed);
    top.read("method", c.method);
    if (auto s = top.child("em")) {
        s->read("max_iters", c.em.max_iters);
        s->read("rel_loglik_tol", c.em.rel_loglik_tol);
        std::string text;
        if (s->read("q_structure", text)) c.em.q_structure = parse_enum(text, parse_q_structure);
        if (s->read("acceleration", text)) c.em.acceleration = parse_enum(text, parse_acceleration);
        s->read("psd_floor", c.em.psd_floor);
        s->read("init_linewidth_hz", c.init_linewidth_hz);
        s->read("restarts", c.restarts);
        s->finish();
    }
    if (auto s = top.child("baseline")) {
        s->read("bandwidth_hz", c.baseline.bandwidth_hz);
        s->read("guard_fraction", c.baseline.guard_fraction);
        s->finish();
    }
    if (auto s = top.child("ekf")) {
        s->read("init", c.ekf.init);
        s->read("init_phase_sd", c.ekf.init_phase_sd);
        s->finish();
    }
    if (auto s = top.child("spectral")) {
        s->read("line_source", c.spectral.line_source);
        s->read("refine_with_baseline", c.spectral.refine_with_baseline);
        s->read("equidistant", c.spectral.equidistant);
        s->finish();
    }
    if (auto s = top.child("analysis")) {
        s->read("ml_correlation", c.analysis.ml_correlation);
        s->read("reference_index", c.analysis.reference_index);
        s->finish();
    }
    if (auto s = top.child("figure")) {
        s->read("id", c.figure.id);
        s->read_list("snr_db", c.figure.snr_db);
        s->read("seeds", c.figure.seeds);
        s->read("samples", c.figure.samples);
        s->read("var_carrier", c.figure.var_carrier);
        s->read("var_rf", c.figure.var_rf);
        s->finish();
    }
    top.read("signal_path", c.signal_path);
    top.read("output_dir", c.output_dir);
    top.finish();

    if (!c.noise.meas_var && c.noise.snr_db.empty()) c.noise.snr_db = {29.05};
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::stringstream s;
    s << in.rdbuf();
    return parse_config(s.str());
}

std::string config_to_json(const ExperimentConfig& c, int indent)
{
    json j;
    j["comb"] = {{"line_indices", c.comb.line_indices},
                 {"spacing_hz", c.comb.spacing_hz},
                 {"center_hz", c.comb.center_hz},
                 {"sample_rate_hz", c.comb.sample_rate_hz},
                 {"amplitude", c.comb.amplitude}};
    json noise = {{"var_carrier", c.noise.var_carrier}, {"var_rf", c.noise.var_rf}};
    if (c.noise.process_cov) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < c.noise.process_cov->rows(); ++i) {
            json row = json::array();
            for (Eigen::Index k = 0; k < c.noise.process_cov->cols(); ++k) row.push_back((*c.noise.process_cov)(i, k));
            rows.push_back(row);
        }
        noise["process_cov"] = rows;
    }
    if (c.noise.meas_var) noise["meas_var"] = *c.noise.meas_var;
    if (!c.noise.snr_db.empty()) noise["snr_db"] = c.noise.snr_db;
    j["noise"] = noise;
    j["samples"] = c.samples;
    j["seed"] = c.seed;
    j["method"] = c.method;
    j["em"] = {{"max_iters", c.em.max_iters},
               {"rel_loglik_tol", c.em.rel_loglik_tol},
               {"q_structure", to_string(c.em.q_structure)},
               {"acceleration", to_string(c.em.acceleration)},
               {"psd_floor", c.em.psd_floor},
               {"init_linewidth_hz", c.init_linewidth_hz},
               {"restarts", c.restarts}};
    j["baseline"] = {{"bandwidth_hz", c.baseline.bandwidth_hz}, {"guard_fraction", c.baseline.guard_fraction}};
    j["ekf"] = {{"init", c.ekf.init}, {"init_phase_sd", c.ekf.init_phase_sd}};
    j["spectral"] = {{"line_source", c.spectral.line_source},
                     {"refine_with_baseline", c.spectral.refine_with_baseline},
                     {"equidistant", c.spectral.equidistant}};
    j["analysis"] = {{"ml_correlation", c.analysis.ml_correlation},
                     {"reference_index", c.analysis.reference_index}};
    json fig = {{"id", c.figure.id}};
    if (c.figure.seeds) fig["seeds"] = *c.figure.seeds;
    if (!c.figure.snr_db.empty()) fig["snr_db"] = c.figure.snr_db;
    if (c.figure.samples) fig["samples"] = *c.figure.samples;
    if (c.figure.var_carrier) fig["var_carrier"] = *c.figure.var_carrier;
    if (c.figure.var_rf) fig["var_rf"] = *c.figure.var_rf;
    j["figure"] = fig;
    j["signal_path"] = c.signal_path;
    j["output_dir"] = c.output_dir;
    return j.dump(indent);
}

std::vector<double> figure_snrs(const ExperimentConfig& config)
{
    if (!config.figure.snr_db.empty()) return config.figure.snr_db;
    if (config.figure.id == 3) return {16.53};
    return {16.53, 23.2, 29.05};
}

int figure_seeds(const ExperimentConfig& config)
{
    if (config.figure.seeds) return *config.figure.seeds;
    return config.figure.id == 3 ? 200 : 4;
}

std::size_t figure_samples(const ExperimentConfig& config)
{
    if (config.figure.samples) return *config.figure.samples;
    return config.figure.id == 3 ? 2000 : 50000;
}

ExperimentConfig figure_config(const ExperimentConfig& config)
{
    ExperimentConfig out = config;
    out.noise.meas_var.reset();
    out.noise.snr_db = figure_snrs(config);
    out.samples = figure_samples(config);
    if (config.figure.id == 3) {
        out.noise.process_cov.reset();
        out.noise.var_carrier = 1.28e-7;
        out.noise.var_rf = 2e-9;
    }
    if (config.figure.var_carrier) out.noise.var_carrier = *config.figure.var_carrier;
    if (config.figure.var_rf) out.noise.var_rf = *config.figure.var_rf;
    return out;
}

} // namespace combtrack
