#include "ttbd/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ttbd/rng.hpp"

namespace ttbd {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// key -> (serialize, parse) table; one row per config field keeps the
// round-trip property mechanical.
struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define STR_FIELD(name, member)                                                 \
    {name,                                                                      \
     {[](const ExperimentConfig& c) { return c.member; },                       \
      [](ExperimentConfig& c, const std::string& v) { c.member = v; }}}
#define U64_FIELD(name, member)                                                  \
    {name,                                                                       \
     {[](const ExperimentConfig& c) { return std::to_string(c.member); },        \
      [](ExperimentConfig& c, const std::string& v) { c.member = std::stoull(v); }}}
#define I64_FIELD(name, member)                                                  \
    {name,                                                                       \
     {[](const ExperimentConfig& c) { return std::to_string(c.member); },        \
      [](ExperimentConfig& c, const std::string& v) { c.member = std::stoll(v); }}}
#define INT_FIELD(name, member)                                                  \
    {name,                                                                       \
     {[](const ExperimentConfig& c) { return std::to_string(c.member); },        \
      [](ExperimentConfig& c, const std::string& v) { c.member = std::stoi(v); }}}
#define DBL_FIELD(name, member)                                                  \
    {name,                                                                       \
     {[](const ExperimentConfig& c) { return fmt_double(c.member); },            \
      [](ExperimentConfig& c, const std::string& v) { c.member = std::stod(v); }}}

const std::vector<std::pair<std::string, Field>>& field_table() {
    static const std::vector<std::pair<std::string, Field>> table = {
        STR_FIELD("dataset.path", dataset_path),
        STR_FIELD("dataset.format", dataset_format),
        U64_FIELD("dataset.train_limit", train_limit),
        U64_FIELD("dataset.test_limit", test_limit),
        U64_FIELD("dataset.synth_train_count", synth_train_count),
        U64_FIELD("dataset.synth_test_count", synth_test_count),
        STR_FIELD("arch", arch),
        STR_FIELD("trigger.kind", trigger_kind),
        INT_FIELD("trigger.target_label", target_label),
        I64_FIELD("trigger.patch.row", patch_row),
        I64_FIELD("trigger.patch.col", patch_col),
        U64_FIELD("trigger.patch.h", patch_h),
        U64_FIELD("trigger.patch.w", patch_w),
        DBL_FIELD("trigger.patch.value", patch_value),
        DBL_FIELD("trigger.blend.alpha", blend_alpha),
        U64_FIELD("trigger.blend.seed", blend_seed),
        DBL_FIELD("trigger.sin.delta", sin_delta),
        DBL_FIELD("trigger.sin.freq", sin_freq),
        DBL_FIELD("train.learning_rate", learning_rate),
        DBL_FIELD("train.momentum", momentum),
        U64_FIELD("train.epochs", epochs),
        U64_FIELD("train.batch_size", train_batch_size),
        DBL_FIELD("poison.rate", poisoning_rate),
        U64_FIELD("batch.size", batch_size),
        DBL_FIELD("batch.rate", batch_rate),
        U64_FIELD("batch.count", batch_count),
        STR_FIELD("detect.method", detect_method),
        U64_FIELD("detect.ddp_n_detect", ddp_n_detect),
        U64_FIELD("detect.teco_n_detect", teco_n_detect),
        DBL_FIELD("detect.theta", ddp_theta),
        U64_FIELD("detect.prune_step", ddp_prune_step),
        DBL_FIELD("detect.budget_fraction", ddp_budget_fraction),
        DBL_FIELD("detect.keep_fraction", ddp_keep_fraction),
        INT_FIELD("shapley.iterations", shapley_iterations),
        DBL_FIELD("shapley.asr_truncation", asr_truncation),
        DBL_FIELD("shapley.acc_truncation", acc_truncation),
        U64_FIELD("repair.k", repair_k),
        U64_FIELD("repair.m", repair_m),
        DBL_FIELD("repair.asr_value_target", asr_value_target),
        DBL_FIELD("repair.max_prune_fraction", max_prune_fraction),
        U64_FIELD("seed", seed),
        INT_FIELD("workers", workers),
    };
    return table;
}

#undef STR_FIELD
#undef U64_FIELD
#undef I64_FIELD
#undef INT_FIELD
#undef DBL_FIELD

}  // namespace

std::string ExperimentConfig::to_text() const {
    std::ostringstream os;
    os << "# ttbd experiment config v1\n";
    for (const auto& [key, field] : field_table()) {
        os << key << "=" << field.get(*this) << "\n";
    }
    return os.str();
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream is(text);
    std::string line;
    std::map<std::string, const Field*> lookup;
    for (const auto& [key, field] : field_table()) lookup[key] = &field;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key=value, got: " + line);
        }
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        const auto it = lookup.find(key);
        if (it == lookup.end()) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key " +
                                     key);
        }
        it->second->set(c, val);
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_text(buf.str());
}

void ExperimentConfig::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << to_text();
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::string ExperimentConfig::training_hash() const {
    // Only fields that change the trained checkpoint participate.
    std::ostringstream os;
    os << dataset_path << "|" << dataset_format << "|" << train_limit << "|" << synth_train_count
       << "|" << arch << "|" << trigger_kind << "|" << target_label << "|" << patch_row << "|"
       << patch_col << "|" << patch_h << "|" << patch_w << "|" << fmt_double(patch_value) << "|"
       << fmt_double(blend_alpha) << "|" << blend_seed << "|" << fmt_double(sin_delta) << "|"
       << fmt_double(sin_freq) << "|" << fmt_double(learning_rate) << "|" << fmt_double(momentum)
       << "|" << epochs << "|" << train_batch_size << "|" << fmt_double(poisoning_rate) << "|"
       << seed;
    const std::string s = os.str();
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

DdpParams ExperimentConfig::ddp_params() const {
    DdpParams p;
    p.prune_step = ddp_prune_step;
    p.budget_fraction = ddp_budget_fraction;
    p.agreement_threshold = ddp_theta;
    p.shapley_keep_fraction = ddp_keep_fraction;
    return p;
}

Hyperparams ExperimentConfig::hyperparams() const {
    Hyperparams hp;
    hp.learning_rate = static_cast<float>(learning_rate);
    hp.momentum = static_cast<float>(momentum);
    hp.epochs = epochs;
    hp.batch_size = train_batch_size;
    hp.seed = seed;
    return hp;
}

TriggerSpec ExperimentConfig::resolve_trigger(std::size_t channels, std::size_t height,
                                              std::size_t width) const {
    const TriggerKind kind = parse_trigger_kind(trigger_kind);
    TriggerSpec spec;
    switch (kind) {
        case TriggerKind::Patch: {
            const std::size_t row =
                patch_row >= 0 ? static_cast<std::size_t>(patch_row) : height - patch_h;
            const std::size_t col =
                patch_col >= 0 ? static_cast<std::size_t>(patch_col) : width - patch_w;
            spec = TriggerSpec::patch(row, col, patch_h, patch_w, static_cast<float>(patch_value),
                                      target_label);
            break;
        }
        case TriggerKind::Blended:
            spec = TriggerSpec::blended(make_noise_trigger(channels, height, width, blend_seed),
                                        static_cast<float>(blend_alpha), target_label);
            break;
        case TriggerKind::Sinusoid:
            spec = TriggerSpec::sinusoid(static_cast<float>(sin_delta),
                                         static_cast<float>(sin_freq), target_label);
            break;
    }
    spec.validate(channels, height, width);
    return spec;
}

}  // namespace ttbd
