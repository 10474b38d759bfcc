#include "astream/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "astream/kernels.hpp"
#include "astream/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset formats assume a little-endian host");

namespace astream {

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "kws_cnn") return ModelKind::KWS_CNN;
    if (s == "mtd_gru") return ModelKind::MTD_GRU;
    if (s == "sod_lstm") return ModelKind::SOD_LSTM;
    throw ConfigError("unknown model kind '" + s + "'");
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::KWS_CNN: return "kws_cnn";
        case ModelKind::MTD_GRU: return "mtd_gru";
        case ModelKind::SOD_LSTM: return "sod_lstm";
    }
    return "?";
}

ModelKind model_for_task(TaskKind task) {
    switch (task) {
        case TaskKind::KWS: return ModelKind::KWS_CNN;
        case TaskKind::MTD: return ModelKind::MTD_GRU;
        case TaskKind::SOD: return ModelKind::SOD_LSTM;
    }
    return ModelKind::KWS_CNN;
}

ModelConfig ModelConfig::defaults(ModelKind kind) {
    ModelConfig c;
    c.kind = kind;
    switch (kind) {
        case ModelKind::KWS_CNN:
            c.input_dim = 16;
            break;
        case ModelKind::MTD_GRU:
            c.input_dim = 2;
            c.hidden = 64;
            break;
        case ModelKind::SOD_LSTM:
            c.input_dim = 40;
            c.hidden = 128;
            c.dense1 = 32;
            c.dropout = 0.2;
            break;
    }
    return c;
}

// Parameter/receptive-field targets enforced at build time.
namespace {
constexpr int kKwsReceptiveFieldTarget = 153;
constexpr int kKwsParamTarget = 12000;
constexpr int kGruParamTarget = 13000;
constexpr double kParamTolerance = 0.15;

struct CnnLayer {
    bool depthwise;
    int in_ch;
    int out_ch;
    int dilation;  // depthwise only
};

// 1 depthwise, then 3 x (2 depthwise + 1 pointwise), then a pointwise output.
std::vector<CnnLayer> cnn_layout(const ModelConfig& c) {
    if (c.dilations.size() != 7) {
        throw ConfigError("kws_cnn: expected 7 depthwise dilations, got " +
                          std::to_string(c.dilations.size()));
    }
    if (c.widths.size() != 3) {
        throw ConfigError("kws_cnn: expected 3 group widths, got " + std::to_string(c.widths.size()));
    }
    std::vector<CnnLayer> layers;
    int ch = c.input_dim;
    int dw = 0;
    layers.push_back({true, ch, ch, c.dilations[dw++]});
    for (int group = 0; group < 3; ++group) {
        layers.push_back({true, ch, ch, c.dilations[dw++]});
        layers.push_back({true, ch, ch, c.dilations[dw++]});
        layers.push_back({false, ch, c.widths[static_cast<std::size_t>(group)], 0});
        ch = c.widths[static_cast<std::size_t>(group)];
    }
    layers.push_back({false, ch, 1, 0});
    return layers;
}

Tensor init_uniform_bound(Rng& rng, std::vector<int> shape, double bound) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

// Gate and head layers: the usual U(-1/sqrt(fan), 1/sqrt(fan)).
Tensor init_uniform(Rng& rng, std::vector<int> shape, int fan_in) {
    return init_uniform_bound(rng, std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

// Relu conv stack: He-gain uniform, keeps activation scale through 11 layers.
Tensor init_uniform_relu(Rng& rng, std::vector<int> shape, int fan_in) {
    return init_uniform_bound(rng, std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)));
}

}  // namespace

StreamingModel StreamingModel::build(const ModelConfig& config) {
    if (config.input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
    if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
        throw ConfigError("model: dropout must be in [0,1)");
    }
    StreamingModel m;
    m.config_ = config;
    Rng rng(mix_seed(config.seed, "model-init"));

    switch (config.kind) {
        case ModelKind::KWS_CNN: {
            if (config.kernel < 1) throw ConfigError("kws_cnn: kernel must be >= 1");
            const auto layers = cnn_layout(config);
            int dw = 0, pw = 0;
            for (const CnnLayer& l : layers) {
                if (l.depthwise) {
                    const std::string base = "dw" + std::to_string(dw++);
                    m.params_.push_back({base + ".w", init_uniform(rng, {l.in_ch, config.kernel}, config.kernel)});
                    m.params_.push_back({base + ".b", Tensor::zeros({l.in_ch})});
                } else {
                    const std::string base = (l.out_ch == 1) ? "out" : "pw" + std::to_string(pw++);
                    m.params_.push_back({base + ".w", init_uniform(rng, {l.in_ch, l.out_ch}, l.in_ch)});
                    m.params_.push_back({base + ".b", Tensor::zeros({l.out_ch})});
                }
            }
            const int rf = m.receptive_field(kUnboundedReceptiveField);
            const int pc = m.param_count();
            const int lo = static_cast<int>(kKwsParamTarget * (1.0 - kParamTolerance));
            const int hi = static_cast<int>(kKwsParamTarget * (1.0 + kParamTolerance));
            if (rf != kKwsReceptiveFieldTarget || pc < lo || pc > hi) {
                throw ConfigError("kws_cnn: config misses targets: receptive field " +
                                  std::to_string(rf) + " (want " + std::to_string(kKwsReceptiveFieldTarget) +
                                  "), params " + std::to_string(pc) + " (want " + std::to_string(lo) +
                                  ".." + std::to_string(hi) + ")");
            }
            break;
        }
        case ModelKind::MTD_GRU: {
            const int h = config.hidden;
            m.params_.push_back({"gru.wx", init_uniform(rng, {config.input_dim, 3 * h}, config.input_dim)});
            m.params_.push_back({"gru.wh", init_uniform(rng, {h, 3 * h}, h)});
            m.params_.push_back({"gru.b", Tensor::zeros({3 * h})});
            m.params_.push_back({"head.w", init_uniform(rng, {h, 1}, h)});
            m.params_.push_back({"head.b", Tensor::zeros({1})});
            const int pc = m.param_count();
            const int lo = static_cast<int>(kGruParamTarget * (1.0 - kParamTolerance));
            const int hi = static_cast<int>(kGruParamTarget * (1.0 + kParamTolerance));
            if (pc < lo || pc > hi) {
                throw ConfigError("mtd_gru: config misses parameter target: " + std::to_string(pc) +
                                  " (want " + std::to_string(lo) + ".." + std::to_string(hi) + ")");
            }
            break;
        }
        case ModelKind::SOD_LSTM: {
            const int h = config.hidden;
            m.params_.push_back({"lstm.wx", init_uniform(rng, {config.input_dim, 4 * h}, config.input_dim)});
            m.params_.push_back({"lstm.wh", init_uniform(rng, {h, 4 * h}, h)});
            Tensor b = Tensor::zeros({4 * h});
            for (int j = 0; j < h; ++j) b[static_cast<std::size_t>(h + j)] = 1.0;  // forget gate
            m.params_.push_back({"lstm.b", std::move(b)});
            m.params_.push_back({"fc1.w", init_uniform(rng, {h, config.dense1}, h)});
            m.params_.push_back({"fc1.b", Tensor::zeros({config.dense1})});
            m.params_.push_back({"fc2.w", init_uniform(rng, {config.dense1, 2}, config.dense1)});
            m.params_.push_back({"fc2.b", Tensor::zeros({2})});
            break;
        }
    }
    return m;
}

int StreamingModel::param_count() const {
    int n = 0;
    for (const NamedParam& p : params_) n += static_cast<int>(p.value.size());
    return n;
}

int StreamingModel::receptive_field(int sequence_len) const {
    if (config_.kind != ModelKind::KWS_CNN) return sequence_len;
    int rf = 1;
    for (int d : config_.dilations) rf += (config_.kernel - 1) * d;
    return rf;
}

const Tensor& StreamingModel::param(const std::string& name) const {
    for (const NamedParam& p : params_) {
        if (p.name == name) return p.value;
    }
    throw Error("model: no parameter named '" + name + "'");
}

std::vector<NodeId> StreamingModel::bind(Tape& tape, bool requires_grad) const {
    std::vector<NodeId> ids;
    ids.reserve(params_.size());
    for (const NamedParam& p : params_) ids.push_back(tape.leaf(p.value, requires_grad));
    return ids;
}

namespace {

// Inverted-dropout coefficient tensor; 0 with probability rate, else 1/(1-rate).
Tensor dropout_mask(std::vector<int> shape, double rate, Rng& rng) {
    Tensor mask = Tensor::zeros(std::move(shape));
    const double keep = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform01() >= rate ? keep : 0.0;
    }
    return mask;
}

}  // namespace

NodeId StreamingModel::forward(Tape& tape, const std::vector<NodeId>& bound, NodeId x,
                               bool training, std::uint64_t dropout_seed) const {
    const Tensor& vx = tape.value(x);
    if (vx.rank() != 3 || vx.dim(2) != config_.input_dim) {
        throw ShapeError("model forward: input " + vx.shape_str() + " does not match input_dim " +
                         std::to_string(config_.input_dim));
    }
    if (bound.size() != params_.size()) {
        throw Error("model forward: expected " + std::to_string(params_.size()) +
                    " bound parameters, got " + std::to_string(bound.size()));
    }
    switch (config_.kind) {
        case ModelKind::KWS_CNN: return forward_cnn(tape, bound, x);
        case ModelKind::MTD_GRU: return forward_gru(tape, bound, x);
        case ModelKind::SOD_LSTM:
            return forward_lstm(tape, bound, x, training && config_.dropout > 0.0, dropout_seed);
    }
    throw Error("model forward: unknown kind");
}

NodeId StreamingModel::forward_cnn(Tape& tape, const std::vector<NodeId>& bound, NodeId x) const {
    const Tensor& vx = tape.value(x);
    const int b = vx.dim(0), t = vx.dim(1);
    const auto layers = cnn_layout(config_);
    NodeId cur = x;
    std::size_t pi = 0;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const CnnLayer& l = layers[li];
        const NodeId w = bound[pi++];
        const NodeId bias = bound[pi++];
        if (l.depthwise) {
            cur = tape.relu(tape.dwconv1d(cur, w, bias, l.dilation));
        } else {
            NodeId flat = tape.reshape(cur, {b * t, l.in_ch});
            NodeId z = tape.add_rowvec(tape.matmul(flat, w), bias);
            const bool is_output = li + 1 == layers.size();
            if (is_output) {
                return tape.reshape(tape.sigmoid(z), {b, t});
            }
            cur = tape.reshape(tape.relu(z), {b, t, l.out_ch});
        }
    }
    throw Error("kws_cnn: layout missing output layer");
}

NodeId StreamingModel::forward_gru(Tape& tape, const std::vector<NodeId>& bound, NodeId x) const {
    const Tensor& vx = tape.value(x);
    const int b = vx.dim(0), t = vx.dim(1), h = config_.hidden;
    NodeId hseq = tape.gru(x, bound[0], bound[1], bound[2]);
    NodeId flat = tape.reshape(hseq, {b * t, h});
    NodeId z = tape.add_rowvec(tape.matmul(flat, bound[3]), bound[4]);
    return tape.reshape(tape.sigmoid(z), {b, t});
}

NodeId StreamingModel::forward_lstm(Tape& tape, const std::vector<NodeId>& bound, NodeId x,
                                    bool dropout_on, std::uint64_t dropout_seed) const {
    const Tensor& vx = tape.value(x);
    const int b = vx.dim(0), t = vx.dim(1), h = config_.hidden, d1 = config_.dense1;
    NodeId hseq = tape.lstm(x, bound[0], bound[1], bound[2]);
    NodeId flat = tape.reshape(hseq, {b * t, h});
    if (dropout_on) {
        Rng rng(mix_seed(dropout_seed, "dropout0"));
        flat = tape.mul_const(flat, dropout_mask({b * t, h}, config_.dropout, rng));
    }
    NodeId z1 = tape.relu(tape.add_rowvec(tape.matmul(flat, bound[3]), bound[4]));
    if (dropout_on) {
        Rng rng(mix_seed(dropout_seed, "dropout1"));
        z1 = tape.mul_const(z1, dropout_mask({b * t, d1}, config_.dropout, rng));
    }
    NodeId z2 = tape.add_rowvec(tape.matmul(z1, bound[5]), bound[6]);
    return tape.reshape(tape.pair_softmax_p1(z2), {b, t});
}

// --------------------------------------------------------------------------
// Streaming inference
// --------------------------------------------------------------------------

StreamState StreamingModel::make_state() const {
    StreamState s;
    switch (config_.kind) {
        case ModelKind::KWS_CNN: {
            for (const CnnLayer& l : cnn_layout(config_)) {
                if (!l.depthwise) continue;
                const int ctx = (config_.kernel - 1) * l.dilation;
                s.conv_context.push_back(Tensor::zeros({ctx, l.in_ch}));
            }
            break;
        }
        case ModelKind::MTD_GRU:
            s.hidden = Tensor::zeros({config_.hidden});
            break;
        case ModelKind::SOD_LSTM:
            s.hidden = Tensor::zeros({config_.hidden});
            s.cell = Tensor::zeros({config_.hidden});
            break;
    }
    return s;
}

namespace {

inline double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y[n] = x[m]*W[m,n] + b[n], accumulation order matching gemm_nn.
void dense_row(const double* x, const Tensor& w, const Tensor& b, double* y) {
    const int m = w.dim(0), n = w.dim(1);
    for (int j = 0; j < n; ++j) y[j] = 0.0;
    for (int p = 0; p < m; ++p) {
        const double xv = x[p];
        const double* wp = w.data() + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) y[j] += xv * wp[j];
    }
    for (int j = 0; j < n; ++j) y[j] += b[static_cast<std::size_t>(j)];
}

}  // namespace

std::vector<double> StreamingModel::forward_chunk(StreamState& state, const Tensor& chunk) const {
    if (chunk.rank() != 2 || chunk.dim(1) != config_.input_dim) {
        throw ShapeError("forward_chunk: chunk " + chunk.shape_str() + " does not match input_dim " +
                         std::to_string(config_.input_dim));
    }
    const int n = chunk.dim(0);
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);

    switch (config_.kind) {
        case ModelKind::KWS_CNN: {
            const auto layers = cnn_layout(config_);
            Tensor cur = chunk;
            std::size_t pi = 0, dw = 0;
            for (std::size_t li = 0; li < layers.size(); ++li) {
                const CnnLayer& l = layers[li];
                const Tensor& w = params_[pi].value;
                const Tensor& bias = params_[pi + 1].value;
                pi += 2;
                if (l.depthwise) {
                    Tensor& ctx = state.conv_context[dw++];
                    const int c = l.in_ch, ctx_len = ctx.dim(0);
                    Tensor ext = Tensor::zeros({ctx_len + n, c});
                    std::memcpy(ext.data(), ctx.data(), ctx.size() * sizeof(double));
                    std::memcpy(ext.data() + ctx.size(), cur.data(), cur.size() * sizeof(double));
                    Tensor conv = Tensor::zeros({ctx_len + n, c});
                    kernels::serial::dwconv_fwd(ext.data(), w.data(), bias.data(), conv.data(), 1,
                                                ctx_len + n, c, config_.kernel, l.dilation);
                    // keep the last ctx_len input frames for the next chunk
                    if (ctx_len > 0) {
                        std::memcpy(ctx.data(), ext.data() + static_cast<std::size_t>(n) * c,
                                    ctx.size() * sizeof(double));
                    }
                    cur = Tensor::zeros({n, c});
                    for (int f = 0; f < n; ++f) {
                        for (int j = 0; j < c; ++j) {
                            const double v = conv.at(ctx_len + f, j);
                            cur.at(f, j) = v > 0.0 ? v : 0.0;
                        }
                    }
                } else {
                    Tensor next = Tensor::zeros({n, l.out_ch});
                    for (int f = 0; f < n; ++f) {
                        dense_row(cur.data() + static_cast<std::size_t>(f) * l.in_ch, w, bias,
                                  next.data() + static_cast<std::size_t>(f) * l.out_ch);
                    }
                    const bool is_output = li + 1 == layers.size();
                    if (is_output) {
                        for (int f = 0; f < n; ++f) out[static_cast<std::size_t>(f)] = sigmoid_s(next.at(f, 0));
                        return out;
                    }
                    for (std::size_t i = 0; i < next.size(); ++i) {
                        if (next[i] < 0.0) next[i] = 0.0;
                    }
                    cur = std::move(next);
                }
            }
            throw Error("kws_cnn: layout missing output layer");
        }
        case ModelKind::MTD_GRU: {
            const int h = config_.hidden;
            const Tensor& wx = param("gru.wx");
            const Tensor& wh = param("gru.wh");
            const Tensor& b = param("gru.b");
            const Tensor& hw = param("head.w");
            const Tensor& hb = param("head.b");
            std::vector<double> px(static_cast<std::size_t>(3 * h));
            std::vector<double> ph(static_cast<std::size_t>(3 * h));
            Tensor zero_bias = Tensor::zeros({3 * h});
            for (int f = 0; f < n; ++f) {
                const double* xf = chunk.data() + static_cast<std::size_t>(f) * config_.input_dim;
                dense_row(xf, wx, zero_bias, px.data());
                dense_row(state.hidden.data(), wh, zero_bias, ph.data());
                double* hp = state.hidden.data();
                for (int j = 0; j < h; ++j) {
                    const double r = sigmoid_s(px[static_cast<std::size_t>(j)] + ph[static_cast<std::size_t>(j)] + b[static_cast<std::size_t>(j)]);
                    const double z = sigmoid_s(px[static_cast<std::size_t>(h + j)] + ph[static_cast<std::size_t>(h + j)] + b[static_cast<std::size_t>(h + j)]);
                    const double hn = ph[static_cast<std::size_t>(2 * h + j)];
                    const double nn = std::tanh(px[static_cast<std::size_t>(2 * h + j)] + r * hn + b[static_cast<std::size_t>(2 * h + j)]);
                    hp[j] = (1.0 - z) * nn + z * hp[j];
                }
                double logit;
                dense_row(hp, hw, hb, &logit);
                out[static_cast<std::size_t>(f)] = sigmoid_s(logit);
            }
            return out;
        }
        case ModelKind::SOD_LSTM: {
            const int h = config_.hidden, d1 = config_.dense1;
            const Tensor& wx = param("lstm.wx");
            const Tensor& wh = param("lstm.wh");
            const Tensor& b = param("lstm.b");
            const Tensor& w1 = param("fc1.w");
            const Tensor& b1 = param("fc1.b");
            const Tensor& w2 = param("fc2.w");
            const Tensor& b2 = param("fc2.b");
            std::vector<double> px(static_cast<std::size_t>(4 * h));
            std::vector<double> ph(static_cast<std::size_t>(4 * h));
            std::vector<double> z1(static_cast<std::size_t>(d1));
            double z2[2];
            Tensor zero_bias = Tensor::zeros({4 * h});
            for (int f = 0; f < n; ++f) {
                const double* xf = chunk.data() + static_cast<std::size_t>(f) * config_.input_dim;
                dense_row(xf, wx, zero_bias, px.data());
                dense_row(state.hidden.data(), wh, zero_bias, ph.data());
                double* hp = state.hidden.data();
                double* cp = state.cell.data();
                for (int j = 0; j < h; ++j) {
                    const double gi = sigmoid_s(px[static_cast<std::size_t>(j)] + ph[static_cast<std::size_t>(j)] + b[static_cast<std::size_t>(j)]);
                    const double gf = sigmoid_s(px[static_cast<std::size_t>(h + j)] + ph[static_cast<std::size_t>(h + j)] + b[static_cast<std::size_t>(h + j)]);
                    const double gg = std::tanh(px[static_cast<std::size_t>(2 * h + j)] + ph[static_cast<std::size_t>(2 * h + j)] + b[static_cast<std::size_t>(2 * h + j)]);
                    const double go = sigmoid_s(px[static_cast<std::size_t>(3 * h + j)] + ph[static_cast<std::size_t>(3 * h + j)] + b[static_cast<std::size_t>(3 * h + j)]);
                    const double c = gf * cp[j] + gi * gg;
                    cp[j] = c;
                    hp[j] = go * std::tanh(c);
                }
                dense_row(hp, w1, b1, z1.data());
                for (int j = 0; j < d1; ++j) {
                    if (z1[static_cast<std::size_t>(j)] < 0.0) z1[static_cast<std::size_t>(j)] = 0.0;
                }
                dense_row(z1.data(), w2, b2, z2);
                out[static_cast<std::size_t>(f)] = sigmoid_s(z2[1] - z2[0]);
            }
            return out;
        }
    }
    throw Error("forward_chunk: unknown kind");
}

std::vector<double> StreamingModel::score_sequence(const Tensor& features) const {
    StreamState state = make_state();
    return forward_chunk(state, features);
}

// --------------------------------------------------------------------------
// Descriptor / checkpoint
// --------------------------------------------------------------------------

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

}  // namespace

std::string ModelConfig::descriptor() const {
    std::ostringstream os;
    os << "kind=" << to_string(kind) << " input_dim=" << input_dim << " seed=" << seed
       << " kernel=" << kernel << " dilations=" << join_ints(dilations)
       << " widths=" << join_ints(widths) << " hidden=" << hidden << " dense1=" << dense1
       << " dropout=" << dropout;
    return os.str();
}

ModelConfig ModelConfig::from_descriptor(const std::string& text) {
    ModelConfig c;
    std::stringstream ss(text);
    std::string tok;
    bool have_kind = false;
    while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint descriptor: bad token '" + tok + "'");
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "kind") {
            c.kind = model_kind_from_string(val);
            have_kind = true;
        } else if (key == "input_dim") {
            c.input_dim = std::stoi(val);
        } else if (key == "seed") {
            c.seed = std::stoull(val);
        } else if (key == "kernel") {
            c.kernel = std::stoi(val);
        } else if (key == "dilations") {
            c.dilations = split_ints(val);
        } else if (key == "widths") {
            c.widths = split_ints(val);
        } else if (key == "hidden") {
            c.hidden = std::stoi(val);
        } else if (key == "dense1") {
            c.dense1 = std::stoi(val);
        } else if (key == "dropout") {
            c.dropout = std::stod(val);
        } else {
            throw DataError("checkpoint descriptor: unknown key '" + key + "'");
        }
    }
    if (!have_kind) throw DataError("checkpoint descriptor: missing kind");
    return c;
}

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is, std::size_t& offset, const char* what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw DataError(std::string("checkpoint: truncated reading ") + what, offset);
    }
    offset += sizeof v;
    return v;
}

}  // namespace

void save_checkpoint(const StreamingModel& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open '" + path.string() + "' for writing");
    os.write(kCheckpointMagic, 4);
    write_u32(os, kCheckpointVersion);
    const std::string desc = model.config().descriptor();
    write_u32(os, static_cast<std::uint32_t>(desc.size()));
    os.write(desc.data(), static_cast<std::streamsize>(desc.size()));
    write_u32(os, static_cast<std::uint32_t>(model.params().size()));
    for (const NamedParam& p : model.params()) {
        write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(os, static_cast<std::uint32_t>(p.value.rank()));
        for (int d : p.value.shape()) write_u32(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(p.value.data()),
                 static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint: write failed for '" + path.string() + "'");
}

StreamingModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path.string() + "'");
    std::size_t offset = 0;
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw DataError("checkpoint: bad magic", 0);
    }
    offset += 4;
    const std::uint32_t version = read_u32(is, offset, "version");
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version), offset - 4);
    }
    const std::uint32_t desc_len = read_u32(is, offset, "descriptor length");
    std::string desc(desc_len, '\0');
    if (!is.read(desc.data(), desc_len)) throw DataError("checkpoint: truncated descriptor", offset);
    offset += desc_len;

    StreamingModel model = StreamingModel::build(ModelConfig::from_descriptor(desc));
    const std::uint32_t n_params = read_u32(is, offset, "parameter count");
    if (n_params != model.params().size()) {
        throw DataError("checkpoint: descriptor expects " + std::to_string(model.params().size()) +
                            " parameters, file has " + std::to_string(n_params),
                        offset - 4);
    }
    for (NamedParam& p : model.params()) {
        const std::uint32_t name_len = read_u32(is, offset, "parameter name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw DataError("checkpoint: truncated name", offset);
        offset += name_len;
        if (name != p.name) {
            throw DataError("checkpoint: parameter '" + name + "' does not match expected '" +
                                p.name + "'",
                            offset - name_len);
        }
        const std::uint32_t rank = read_u32(is, offset, "parameter rank");
        std::vector<int> shape;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(static_cast<int>(read_u32(is, offset, "parameter dim")));
        }
        if (shape != p.value.shape()) {
            throw DataError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                                ", expected " + p.value.shape_str(),
                            offset);
        }
        if (!is.read(reinterpret_cast<char*>(p.value.data()),
                     static_cast<std::streamsize>(p.value.size() * sizeof(double)))) {
            throw DataError("checkpoint: truncated values for '" + name + "'", offset);
        }
        offset += p.value.size() * sizeof(double);
    }
    return model;
}

}  // namespace astream
