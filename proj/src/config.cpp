#include "astream/config.hpp"

#include <fstream>
#include <sstream>

namespace astream {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text) {
    KvConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                              line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (cfg.values_.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path.string() + "'");
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse_string(buffer.str());
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int KvConfig::get_int(const std::string& key, int fallback) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const int v = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: field '" + key + "' is not an integer: '" + it->second + "'");
    }
}

double KvConfig::get_double(const std::string& key, double fallback) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: field '" + key + "' is not a number: '" + it->second + "'");
    }
}

std::uint64_t KvConfig::get_seed(const std::string& key, std::uint64_t fallback) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: field '" + key + "' is not a seed: '" + it->second + "'");
    }
}

std::vector<int> KvConfig::get_int_list(const std::string& key, std::vector<int> fallback) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(trim(tok)));
        } catch (const std::exception&) {
            throw ConfigError("config: field '" + key + "' has a non-integer entry: '" + tok + "'");
        }
    }
    return out;
}

std::vector<std::string> KvConfig::get_str_list(const std::string& key,
                                                std::vector<std::string> fallback) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::string> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
}

void KvConfig::reject_unknown_keys() const {
    for (const auto& [key, value] : values_) {
        if (!consumed_.count(key)) {
            throw ConfigError("config: unknown field '" + key + "'");
        }
    }
}

RunConfig RunConfig::defaults(TaskKind task) {
    RunConfig c;
    c.task = task;
    c.gen = GenConfig::defaults(task);
    c.model = ModelConfig::defaults(model_for_task(task));
    c.train.task = task;
    for (LossKind k :
         {LossKind::FCEL, LossKind::FFL, LossKind::SAL, LossKind::SA_PLUS_FL, LossKind::SAFL}) {
        LossSpec spec;
        spec.kind = k;
        c.losses.push_back(spec);
    }
    return c;
}

RunConfig RunConfig::from_kv(KvConfig kv) {
    const TaskKind task = task_from_string(kv.get_str("task", "kws"));
    RunConfig c = defaults(task);

    c.gen.n_sequences = kv.get_int("gen.n_sequences", c.gen.n_sequences);
    c.gen.positive_fraction = kv.get_double("gen.positive_fraction", c.gen.positive_fraction);
    c.gen.t_min = kv.get_int("gen.t_min", c.gen.t_min);
    c.gen.t_max = kv.get_int("gen.t_max", c.gen.t_max);
    c.gen.event_min = kv.get_int("gen.event_min", c.gen.event_min);
    c.gen.event_max = kv.get_int("gen.event_max", c.gen.event_max);
    c.gen.noise_level = kv.get_double("gen.noise_level", c.gen.noise_level);
    c.gen.event_strength = kv.get_double("gen.event_strength", c.gen.event_strength);
    c.gen.distractor_fraction = kv.get_double("gen.distractor_fraction", c.gen.distractor_fraction);
    c.gen.boundary_margin = kv.get_int("gen.boundary_margin", c.gen.boundary_margin);
    c.gen.energy_margin = kv.get_double("gen.energy_margin", c.gen.energy_margin);
    c.gen.frame_period_ms = kv.get_double("gen.frame_period_ms", c.gen.frame_period_ms);
    c.gen.seed = kv.get_seed("gen.seed", c.gen.seed);

    c.model.seed = kv.get_seed("model.seed", c.model.seed);
    c.model.input_dim = kv.get_int("model.input_dim", c.model.input_dim);
    c.model.kernel = kv.get_int("model.kernel", c.model.kernel);
    c.model.dilations = kv.get_int_list("model.dilations", c.model.dilations);
    c.model.widths = kv.get_int_list("model.widths", c.model.widths);
    c.model.hidden = kv.get_int("model.hidden", c.model.hidden);
    c.model.dense1 = kv.get_int("model.dense1", c.model.dense1);
    c.model.dropout = kv.get_double("model.dropout", c.model.dropout);

    c.train.epochs = kv.get_int("train.epochs", c.train.epochs);
    c.train.batch_size = kv.get_int("train.batch_size", c.train.batch_size);
    c.train.lr0 = kv.get_double("train.lr0", c.train.lr0);
    const std::string sched = kv.get_str("train.schedule", "cosine");
    if (sched == "cosine") {
        c.train.schedule = LrSchedule::Cosine;
    } else if (sched == "constant") {
        c.train.schedule = LrSchedule::Constant;
    } else {
        throw ConfigError("config: field 'train.schedule' must be cosine or constant");
    }
    c.train.beta1 = kv.get_double("train.beta1", c.train.beta1);
    c.train.beta2 = kv.get_double("train.beta2", c.train.beta2);
    c.train.eps = kv.get_double("train.eps", c.train.eps);
    c.train.seed = kv.get_seed("train.seed", c.train.seed);

    const double gamma = kv.get_double("loss.gamma", 2.0);
    const double alpha = kv.get_double("loss.alpha", 0.25);
    const double uniform_w = kv.get_double("loss.no_anchor_weight", 1.0);
    const std::vector<std::string> kinds =
        kv.get_str_list("loss.kinds", {"fcel", "ffl", "sal", "sa+fl", "safl"});
    if (kinds.empty()) throw ConfigError("config: field 'loss.kinds' must list at least one loss");
    c.losses.clear();
    for (const std::string& k : kinds) {
        LossSpec spec;
        spec.kind = loss_from_string(k);
        spec.gamma = gamma;
        spec.alpha = alpha;
        spec.no_anchor_weight = uniform_w;
        c.losses.push_back(spec);
    }

    c.target_fpr = kv.get_double("eval.target_fpr", c.target_fpr);
    c.data_dir = kv.get_str("data.dir", "");

    kv.reject_unknown_keys();
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    return from_kv(KvConfig::parse_file(path));
}

void RunConfig::override_seed(std::uint64_t seed) {
    gen.seed = seed;
    model.seed = seed;
    train.seed = seed;
}

void RunConfig::validate() const {
    gen.validate();
    train.validate();
    if (losses.empty()) throw ConfigError("config: loss list must not be empty");
    for (const LossSpec& spec : losses) spec.validate();
    if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
        throw ConfigError("config: field 'eval.target_fpr' must be in (0,1)");
    }
    if (gen.task != task) throw ConfigError("config: generator task disagrees with run task");
    if (model_for_task(task) != model.kind) {
        throw ConfigError("config: model kind does not match task");
    }
}

}  // namespace astream
