#include "astream/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "astream/rng.hpp"

namespace astream {

int GenConfig::feature_dim() const {
    switch (task) {
        case TaskKind::KWS: return 16;
        case TaskKind::MTD: return 2;
        case TaskKind::SOD: return 40;
    }
    return 0;
}

GenConfig GenConfig::defaults(TaskKind t) {
    GenConfig c;
    c.task = t;
    switch (t) {
        case TaskKind::KWS:
            break;  // struct defaults are the KWS defaults
        case TaskKind::MTD:
            c.n_sequences = 900;
            c.t_min = 100;
            c.t_max = 160;
            c.event_min = 30;
            c.event_max = 50;
            c.noise_level = 0.35;
            break;
        case TaskKind::SOD:
            c.n_sequences = 600;
            c.t_min = 90;
            c.t_max = 130;
            c.event_min = 40;
            c.event_max = 60;
            c.noise_level = 0.8;
            break;
    }
    return c;
}

void GenConfig::validate() const {
    if (n_sequences < 1) throw ConfigError("gen.n_sequences must be >= 1");
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
        throw ConfigError("gen.positive_fraction must be in [0,1]");
    }
    if (t_min < 1 || t_min > t_max) throw ConfigError("gen.t_min/t_max is not a valid range");
    if (event_min < 1 || event_min > event_max) {
        throw ConfigError("gen.event_min/event_max is not a valid range");
    }
    if (boundary_margin < 0) throw ConfigError("gen.boundary_margin must be >= 0");
    if (t_min < event_max + 2 * boundary_margin + 1) {
        throw ConfigError("gen: impossible ranges: t_min " + std::to_string(t_min) +
                          " cannot hold an event of " + std::to_string(event_max) +
                          " frames with margin " + std::to_string(boundary_margin));
    }
    if (noise_level < 0.0) throw ConfigError("gen.noise_level must be >= 0");
    if (event_strength <= 0.0) throw ConfigError("gen.event_strength must be > 0");
    if (!(distractor_fraction >= 0.0 && distractor_fraction <= 1.0)) {
        throw ConfigError("gen.distractor_fraction must be in [0,1]");
    }
    if (frame_period_ms <= 0.0) throw ConfigError("gen.frame_period_ms must be > 0");
}

std::vector<const LabeledSequence*> Dataset::split_view(Split s) const {
    std::vector<const LabeledSequence*> out;
    for (const LabeledSequence& seq : sequences) {
        if (seq.split == s) out.push_back(&seq);
    }
    return out;
}

int Dataset::count(Split s) const {
    int n = 0;
    for (const LabeledSequence& seq : sequences) n += seq.split == s ? 1 : 0;
    return n;
}

int Dataset::positives(Split s) const {
    int n = 0;
    for (const LabeledSequence& seq : sequences) {
        if (seq.split == s && seq.is_positive()) ++n;
    }
    return n;
}

// --------------------------------------------------------------------------
// Generation
// --------------------------------------------------------------------------

namespace {

// Orthonormal direction set shared by a dataset; drawn once from the seed.
struct PatternBank {
    std::vector<double> a, b, c;
};

std::vector<double> normalize(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::vector<double> orthogonalize(std::vector<double> v, const std::vector<double>& u) {
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * u[i];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * u[i];
    return v;
}

PatternBank make_patterns(std::uint64_t seed, int dim) {
    Rng rng(mix_seed(seed, "patterns"));
    PatternBank p;
    auto draw = [&] {
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (double& x : v) x = rng.gaussian();
        return v;
    };
    p.a = normalize(draw());
    p.b = normalize(orthogonalize(draw(), p.a));
    p.c = normalize(orthogonalize(orthogonalize(draw(), p.a), p.b));
    return p;
}

// AR(1) background noise, one state per feature dimension.
void fill_noise(Tensor& x, double sigma, Rng& rng) {
    const int t_len = x.dim(0), d = x.dim(1);
    const double rho = 0.5;
    const double drive = std::sqrt(1.0 - rho * rho) * sigma;
    std::vector<double> state(static_cast<std::size_t>(d), 0.0);
    for (int t = 0; t < t_len; ++t) {
        for (int j = 0; j < d; ++j) {
            state[static_cast<std::size_t>(j)] =
                rho * state[static_cast<std::size_t>(j)] + drive * rng.gaussian();
            x.at(t, j) = state[static_cast<std::size_t>(j)];
        }
    }
}

void add_pattern(Tensor& x, int t, const std::vector<double>& dir, double amount) {
    const int d = x.dim(1);
    for (int j = 0; j < d; ++j) x.at(t, j) += amount * dir[static_cast<std::size_t>(j)];
}

struct EventSpan {
    int start;  // 0-based, inclusive
    int len;
};

EventSpan draw_span(const GenConfig& cfg, int t_len, Rng& rng) {
    const int len = static_cast<int>(rng.uniform_int(cfg.event_min, cfg.event_max));
    const int lo = cfg.boundary_margin;
    const int hi = t_len - len - cfg.boundary_margin;  // inclusive upper bound for start
    const int start = static_cast<int>(rng.uniform_int(lo, hi));
    return {start, len};
}

// Keyword-style event: an ambiguous body pattern capped by a short
// discriminative suffix that completes exactly at the event end. Distractors
// reuse the body and envelope with a different suffix direction, so only the
// suffix identity separates the classes.
void synth_kws(const GenConfig& cfg, const PatternBank& pat, LabeledSequence& seq, bool positive,
               Rng& rng) {
    const int t_len = seq.frames();
    fill_noise(seq.features, cfg.noise_level, rng);
    const bool distractor = !positive && rng.uniform01() < cfg.distractor_fraction;
    if (!positive && !distractor) return;

    const EventSpan ev = draw_span(cfg, t_len, rng);
    const int suffix_len = std::max(6, ev.len / 4);
    const double a = cfg.event_strength;
    const std::vector<double>& suffix_dir = positive ? pat.b : pat.c;
    for (int k = 0; k < ev.len; ++k) {
        const int t = ev.start + k;
        const double body_env = std::min(1.0, (k + 1) / 4.0);
        add_pattern(seq.features, t, pat.a, a * body_env);
        const int from_end = ev.len - 1 - k;
        if (from_end < suffix_len) {
            const double ramp = static_cast<double>(suffix_len - from_end) / suffix_len;
            add_pattern(seq.features, t, suffix_dir, a * ramp);
        }
        if (positive) seq.labels[static_cast<std::size_t>(t)] = 1;
    }
}

// Speech-onset-style event: energy ramps up slowly from the onset, so early
// frames are low-evidence and late frames easy. Distractor is a steady hum in
// an orthogonal direction.
void synth_sod(const GenConfig& cfg, const PatternBank& pat, LabeledSequence& seq, bool positive,
               Rng& rng) {
    const int t_len = seq.frames();
    fill_noise(seq.features, cfg.noise_level, rng);
    const bool distractor = !positive && rng.uniform01() < cfg.distractor_fraction;
    if (!positive && !distractor) return;

    const EventSpan ev = draw_span(cfg, t_len, rng);
    const double a = cfg.event_strength;
    if (!positive) {
        for (int k = 0; k < ev.len; ++k) {
            add_pattern(seq.features, ev.start + k, pat.c, 0.5 * a);
        }
        return;
    }
    const int ramp_len = std::min(24, ev.len);
    for (int k = 0; k < ev.len; ++k) {
        const int t = ev.start + k;
        const double env = std::min(1.0, static_cast<double>(k + 1) / ramp_len);
        add_pattern(seq.features, t, pat.a, a * env);
        add_pattern(seq.features, t, pat.b, 0.35 * a * env * std::sin(2.0 * 3.14159265358979323846 * k / 16.0));
        seq.labels[static_cast<std::size_t>(t)] = 1;
    }
}

// Two surrogate score channels (0: audio, 1: gesture). The gesture score
// leads the trigger, audio rises at speech start; negatives include
// gesture-only raises that must not fire.
void synth_mtd(const GenConfig& cfg, LabeledSequence& seq, bool positive, Rng& rng) {
    const int t_len = seq.frames();
    fill_noise(seq.features, cfg.noise_level * 0.25, rng);
    for (std::size_t i = 0; i < seq.features.size(); ++i) {
        seq.features[i] = 0.08 + std::abs(seq.features[i]);
    }
    const bool distractor = !positive && rng.uniform01() < cfg.distractor_fraction;
    if (positive || distractor) {
        const EventSpan ev = draw_span(cfg, t_len, rng);
        const int lead = static_cast<int>(rng.uniform_int(8, 20));
        const int g_start = std::max(0, ev.start - lead);
        const int g_end = std::min(t_len - 1, ev.start + ev.len - 1 + 4);
        for (int t = g_start; t <= g_end; ++t) {
            const double ramp = std::min(1.0, (t - g_start + 1) / 8.0);
            seq.features.at(t, 1) += 0.85 * ramp;
        }
        if (positive) {
            for (int k = 0; k < ev.len; ++k) {
                const int t = ev.start + k;
                const double ramp = std::min(1.0, (k + 1) / 6.0);
                seq.features.at(t, 0) += 0.9 * ramp;
                seq.labels[static_cast<std::size_t>(t)] = 1;
            }
        }
    }
    for (std::size_t i = 0; i < seq.features.size(); ++i) {
        seq.features[i] = std::min(1.0, std::max(0.0, seq.features[i]));
    }
}

}  // namespace

Dataset generate(const GenConfig& config) {
    config.validate();
    const int d = config.feature_dim();
    const PatternBank patterns = make_patterns(config.seed, d);
    const int n_pos = static_cast<int>(std::llround(config.n_sequences * config.positive_fraction));

    Dataset ds;
    ds.sequences.resize(static_cast<std::size_t>(config.n_sequences));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < config.n_sequences; ++i) {
        Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(i)));
        LabeledSequence& seq = ds.sequences[static_cast<std::size_t>(i)];
        const int t_len = static_cast<int>(rng.uniform_int(config.t_min, config.t_max));
        seq.features = Tensor::zeros({t_len, d});
        seq.labels.assign(static_cast<std::size_t>(t_len), 0);
        seq.frame_period_ms = config.frame_period_ms;
        seq.task = config.task;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "%s-%06d", to_string(config.task).c_str(), i);
        seq.id = idbuf;
        const bool positive = i < n_pos;
        switch (config.task) {
            case TaskKind::KWS: synth_kws(config, patterns, seq, positive, rng); break;
            case TaskKind::SOD: synth_sod(config, patterns, seq, positive, rng); break;
            case TaskKind::MTD: synth_mtd(config, seq, positive, rng); break;
        }
        // Quantize to f32 grid so the on-disk format round-trips bit-exactly.
        for (std::size_t j = 0; j < seq.features.size(); ++j) {
            seq.features[j] = static_cast<double>(static_cast<float>(seq.features[j]));
        }
    }
    return ds;
}

// --------------------------------------------------------------------------
// Split
// --------------------------------------------------------------------------

namespace {

std::vector<int> largest_remainder(int total, const double ratios[3]) {
    std::vector<int> counts(3);
    std::vector<double> frac(3);
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double want = total * ratios[s];
        counts[static_cast<std::size_t>(s)] = static_cast<int>(std::floor(want));
        frac[static_cast<std::size_t>(s)] = want - std::floor(want);
        assigned += counts[static_cast<std::size_t>(s)];
    }
    while (assigned < total) {
        int best = 0;
        for (int s = 1; s < 3; ++s) {
            if (frac[static_cast<std::size_t>(s)] > frac[static_cast<std::size_t>(best)] + 1e-12) best = s;
        }
        ++counts[static_cast<std::size_t>(best)];
        frac[static_cast<std::size_t>(best)] = -1.0;
        ++assigned;
    }
    return counts;
}

}  // namespace

void split_dataset(Dataset& dataset, double train_ratio, double val_ratio, double test_ratio,
                   std::uint64_t seed) {
    const double ratios[3] = {train_ratio, val_ratio, test_ratio};
    double sum = 0.0;
    int active = 0;
    for (double r : ratios) {
        if (r < 0.0) throw ConfigError("split: ratios must be nonnegative");
        sum += r;
        active += r > 0.0 ? 1 : 0;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");
    const int n = static_cast<int>(dataset.sequences.size());
    if (n < active) {
        throw Error("split: " + std::to_string(n) + " sequences cannot fill " +
                    std::to_string(active) + " splits");
    }

    std::vector<int> pos_idx, neg_idx;
    for (int i = 0; i < n; ++i) {
        (dataset.sequences[static_cast<std::size_t>(i)].is_positive() ? pos_idx : neg_idx).push_back(i);
    }
    Rng rng(mix_seed(seed, "split"));
    rng.shuffle(pos_idx);
    rng.shuffle(neg_idx);

    const std::vector<int> totals = largest_remainder(n, ratios);
    std::vector<int> pos_counts = largest_remainder(static_cast<int>(pos_idx.size()), ratios);
    // Repair any split where rounding allocated more positives than seats.
    for (int s = 0; s < 3; ++s) {
        while (pos_counts[static_cast<std::size_t>(s)] > totals[static_cast<std::size_t>(s)]) {
            int target = -1;
            for (int o = 0; o < 3; ++o) {
                if (o == s) continue;
                if (pos_counts[static_cast<std::size_t>(o)] < totals[static_cast<std::size_t>(o)] &&
                    (target < 0 ||
                     totals[static_cast<std::size_t>(o)] - pos_counts[static_cast<std::size_t>(o)] >
                         totals[static_cast<std::size_t>(target)] - pos_counts[static_cast<std::size_t>(target)])) {
                    target = o;
                }
            }
            --pos_counts[static_cast<std::size_t>(s)];
            ++pos_counts[static_cast<std::size_t>(target)];
        }
    }

    const Split order[3] = {Split::Train, Split::Validation, Split::Test};
    std::size_t p = 0, q = 0;
    for (int s = 0; s < 3; ++s) {
        const int n_pos_s = pos_counts[static_cast<std::size_t>(s)];
        const int n_neg_s = totals[static_cast<std::size_t>(s)] - n_pos_s;
        for (int k = 0; k < n_pos_s; ++k) {
            dataset.sequences[static_cast<std::size_t>(pos_idx[p++])].split = order[s];
        }
        for (int k = 0; k < n_neg_s; ++k) {
            dataset.sequences[static_cast<std::size_t>(neg_idx[q++])].split = order[s];
        }
    }
}

// --------------------------------------------------------------------------
// On-disk format
// --------------------------------------------------------------------------

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "validation") return Split::Validation;
    if (s == "test") return Split::Test;
    throw DataError("manifest: unknown split '" + s + "'");
}

namespace {
constexpr char kSeqMagic[4] = {'A', 'S', 'E', 'Q'};
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream blob(dir / "sequences.bin", std::ios::binary);
    std::ofstream manifest(dir / "manifest.tsv");
    if (!blob || !manifest) throw DataError("write_dataset: cannot open output files in '" + dir.string() + "'");

    std::uint64_t offset = 0;
    for (const LabeledSequence& seq : dataset.sequences) {
        const std::uint32_t t_len = static_cast<std::uint32_t>(seq.frames());
        const std::uint32_t d = static_cast<std::uint32_t>(seq.feature_dim());
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", seq.frame_period_ms);
        manifest << seq.id << '\t' << to_string(seq.split) << '\t' << to_string(seq.task) << '\t'
                 << t_len << '\t' << d << '\t' << buf << '\t' << offset << '\n';

        blob.write(kSeqMagic, 4);
        blob.write(reinterpret_cast<const char*>(&t_len), 4);
        blob.write(reinterpret_cast<const char*>(&d), 4);
        std::vector<float> f32(seq.features.size());
        for (std::size_t i = 0; i < f32.size(); ++i) f32[i] = static_cast<float>(seq.features[i]);
        blob.write(reinterpret_cast<const char*>(f32.data()),
                   static_cast<std::streamsize>(f32.size() * sizeof(float)));
        blob.write(reinterpret_cast<const char*>(seq.labels.data()),
                   static_cast<std::streamsize>(seq.labels.size()));
        offset += 12 + f32.size() * sizeof(float) + seq.labels.size();
    }
    if (!blob || !manifest) throw DataError("write_dataset: write failed in '" + dir.string() + "'");
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.tsv");
    if (!manifest) throw DataError("read_dataset: missing manifest '" + (dir / "manifest.tsv").string() + "'");
    std::ifstream blob(dir / "sequences.bin", std::ios::binary);
    if (!blob) throw DataError("read_dataset: missing blob '" + (dir / "sequences.bin").string() + "'");

    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, split_s, task_s, period_s;
        std::uint64_t t_len = 0, d = 0, offset = 0;
        if (!(std::getline(ss, id, '\t') && std::getline(ss, split_s, '\t') &&
              std::getline(ss, task_s, '\t') && (ss >> t_len) && ss.get() == '\t' && (ss >> d) &&
              ss.get() == '\t' && std::getline(ss, period_s, '\t') && (ss >> offset))) {
            throw DataError("manifest line " + std::to_string(line_no) + ": malformed record");
        }

        LabeledSequence seq;
        seq.id = id;
        seq.split = split_from_string(split_s);
        seq.task = task_from_string(task_s);
        seq.frame_period_ms = std::stod(period_s);

        blob.clear();
        blob.seekg(static_cast<std::streamoff>(offset));
        char magic[4] = {};
        std::size_t pos = offset;
        if (!blob.read(magic, 4) || std::memcmp(magic, kSeqMagic, 4) != 0) {
            throw DataError("sequence '" + id + "': bad magic", pos);
        }
        pos += 4;
        std::uint32_t bt = 0, bd = 0;
        if (!blob.read(reinterpret_cast<char*>(&bt), 4) || !blob.read(reinterpret_cast<char*>(&bd), 4)) {
            throw DataError("sequence '" + id + "': truncated header", pos);
        }
        pos += 8;
        if (bt != t_len || bd != d) {
            throw DataError("sequence '" + id + "': blob dims " + std::to_string(bt) + "x" +
                                std::to_string(bd) + " disagree with manifest " + std::to_string(t_len) +
                                "x" + std::to_string(d),
                            pos - 8);
        }
        std::vector<float> f32(static_cast<std::size_t>(t_len) * d);
        if (!blob.read(reinterpret_cast<char*>(f32.data()),
                       static_cast<std::streamsize>(f32.size() * sizeof(float)))) {
            throw DataError("sequence '" + id + "': truncated features", pos);
        }
        pos += f32.size() * sizeof(float);
        seq.features = Tensor::zeros({static_cast<int>(t_len), static_cast<int>(d)});
        for (std::size_t i = 0; i < f32.size(); ++i) seq.features[i] = static_cast<double>(f32[i]);
        seq.labels.resize(static_cast<std::size_t>(t_len));
        if (!blob.read(reinterpret_cast<char*>(seq.labels.data()),
                       static_cast<std::streamsize>(seq.labels.size()))) {
            throw DataError("sequence '" + id + "': truncated labels", pos);
        }
        for (std::size_t i = 0; i < seq.labels.size(); ++i) {
            if (seq.labels[i] > 1) {
                throw DataError("sequence '" + id + "': label not in {0,1}", pos + i);
            }
        }
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

}  // namespace astream
