#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdagrin/csv.hpp"
#include "sdagrin/errors.hpp"
#include "sdagrin/trainer.hpp"

namespace sdagrin {

// Line-based run configuration:
//   # comment            (also ';')
//   [section]
//   key = value
// Unknown sections and keys are rejected. Later assignments win, so command-line overrides
// are applied as extra `section.key=value` lines after the file.

inline constexpr int kRunFormatVersion = 1;

struct DataSection {
    std::string values;     // values CSV
    std::string coords;     // id,lat,lon (or id,x,y with distance = euclidean)
    std::string mask;       // optional observed mask
    std::string eval_mask;  // optional held-out mask; replaces random injection
    std::string adjacency;  // precomputed N x N adjacency; overrides coords
    double threshold = 0.1;
    std::string distance = "haversine";
};

struct SynthSection {
    std::size_t nodes = 12;
    std::size_t steps = 8192;
    std::string pattern = "pairs";  // pairs | cliques | single
    std::size_t group = 3;          // clique size for pattern = cliques
    std::size_t switch_period = 64;
    double noise_scale = 1.0;
    double decay = 0.9;
    std::uint64_t seed = 101;
};

struct AblateSection {
    std::string mode = "static";  // static | window | missing | heads
    std::string values;           // comma list; empty = default axis values
    std::size_t repeats = 5;
};

struct DiagnoseSection {
    std::size_t window = 0;  // 0 = model window
    std::string split = "val";
};

struct ExportSection {
    std::string split = "test";
    std::size_t max_windows = 4;
};

struct RunSection {
    std::string out = "out";
    std::string checkpoint;   // input checkpoint for impute / evaluate / export-graphs
    std::string predictions;  // filled CSV for evaluate
};

struct RunConfig {
    DataSection data;
    SynthSection synth;
    TrainConfig train;
    AblateSection ablate;
    DiagnoseSection diagnose;
    ExportSection export_graphs;
    RunSection run;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& text, const std::string& where) {
    T v{};
    const char* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end) throw UsageError(where + ": '" + text + "' is not a valid number");
    return v;
}

inline bool parse_bool(const std::string& text, const std::string& where) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw UsageError(where + ": '" + text + "' is not true/false");
}

}  // namespace detail

struct ConfigField {
    std::string section;
    std::string key;
    std::function<void(const std::string& value, const std::string& where)> set;
    std::function<std::string()> get;
};

// Every recognized key, in the order used when writing a resolved config.
inline std::vector<ConfigField> config_fields(RunConfig& c) {
    std::vector<ConfigField> f;
    auto text = [&](const char* sec, const char* key, std::string* p) {
        f.push_back({sec, key, [p](const std::string& v, const std::string&) { *p = v; }, [p] { return *p; }});
    };
    auto count = [&](const char* sec, const char* key, std::size_t* p) {
        f.push_back({sec, key, [p](const std::string& v, const std::string& w) { *p = detail::parse_number<std::size_t>(v, w); },
                     [p] { return std::to_string(*p); }});
    };
    auto u64 = [&](const char* sec, const char* key, std::uint64_t* p) {
        f.push_back({sec, key, [p](const std::string& v, const std::string& w) { *p = detail::parse_number<std::uint64_t>(v, w); },
                     [p] { return std::to_string(*p); }});
    };
    auto real = [&](const char* sec, const char* key, double* p) {
        f.push_back({sec, key, [p](const std::string& v, const std::string& w) { *p = detail::parse_number<double>(v, w); },
                     [p] { return csv::format_double(*p); }});
    };
    auto flag = [&](const char* sec, const char* key, bool* p) {
        f.push_back({sec, key, [p](const std::string& v, const std::string& w) { *p = detail::parse_bool(v, w); },
                     [p] { return std::string(*p ? "true" : "false"); }});
    };

    text("data", "values", &c.data.values);
    text("data", "coords", &c.data.coords);
    text("data", "mask", &c.data.mask);
    text("data", "eval_mask", &c.data.eval_mask);
    text("data", "adjacency", &c.data.adjacency);
    real("data", "threshold", &c.data.threshold);
    text("data", "distance", &c.data.distance);

    count("synth", "nodes", &c.synth.nodes);
    count("synth", "steps", &c.synth.steps);
    text("synth", "pattern", &c.synth.pattern);
    count("synth", "group", &c.synth.group);
    count("synth", "switch_period", &c.synth.switch_period);
    real("synth", "noise_scale", &c.synth.noise_scale);
    real("synth", "decay", &c.synth.decay);
    u64("synth", "seed", &c.synth.seed);

    ModelConfig& m = c.train.model;
    count("model", "nodes", &m.nodes);
    count("model", "window", &m.window);
    count("model", "heads", &m.heads);
    count("model", "head_dim", &m.head_dim);
    count("model", "state_dim", &m.state_dim);
    count("model", "spatial_dim", &m.spatial_dim);
    count("model", "diffusion_order", &m.diffusion_order);
    count("model", "fusion_hidden", &m.fusion_hidden);

    TrainConfig& t = c.train;
    real("train", "learning_rate", &t.learning_rate);
    count("train", "batch_size", &t.batch_size);
    count("train", "max_epochs", &t.max_epochs);
    count("train", "patience", &t.patience);
    u64("train", "seed", &t.seed);
    real("train", "missing_rate", &t.missing_rate);
    real("train", "beta1", &t.beta1);
    real("train", "beta2", &t.beta2);
    real("train", "epsilon", &t.epsilon);
    flag("train", "log_timing", &t.log_timing);

    text("ablate", "mode", &c.ablate.mode);
    text("ablate", "values", &c.ablate.values);
    count("ablate", "repeats", &c.ablate.repeats);

    count("diagnose", "window", &c.diagnose.window);
    text("diagnose", "split", &c.diagnose.split);

    text("export", "split", &c.export_graphs.split);
    count("export", "max_windows", &c.export_graphs.max_windows);

    text("run", "out", &c.run.out);
    text("run", "checkpoint", &c.run.checkpoint);
    text("run", "predictions", &c.run.predictions);
    return f;
}

// Sets `section.key` to `value`; `where` prefixes error messages.
inline void set_config_value(RunConfig& c, const std::string& section, const std::string& key, const std::string& value,
                             const std::string& where) {
    bool section_known = false;
    for (auto& field : config_fields(c)) {
        if (field.section != section) continue;
        section_known = true;
        if (field.key == key) {
            field.set(value, where + ": " + section + "." + key);
            return;
        }
    }
    if (!section_known) throw UsageError(where + ": unknown section [" + section + "]");
    throw UsageError(where + ": unknown key '" + key + "' in [" + section + "]");
}

inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw UsageError(where + ": malformed section header");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            bool known = false;
            for (auto& field : config_fields(c)) known = known || field.section == section;
            if (!known) throw UsageError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
        if (section.empty()) throw UsageError(where + ": key outside of any [section]");
        set_config_value(c, section, detail::trim(std::string_view(line).substr(0, eq)),
                         detail::trim(std::string_view(line).substr(eq + 1)), where);
    }
}

inline RunConfig load_run_config(const std::string& path) {
    RunConfig c;
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(c, ss.str(), path);
    return c;
}

// `section.key=value`, as given on the command line.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw UsageError("override '" + assignment + "' must look like section.key=value");
    set_config_value(c, detail::trim(assignment.substr(0, dot)), detail::trim(assignment.substr(dot + 1, eq - dot - 1)),
                     detail::trim(assignment.substr(eq + 1)), "override");
}

// Every key with its effective value; parsing the result reproduces the same config.
inline std::string format_run_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    std::string out = "# format_version = " + std::to_string(kRunFormatVersion) + "\n";
    std::string section;
    for (auto& field : config_fields(copy)) {
        if (field.section != section) {
            section = field.section;
            out += "\n[" + section + "]\n";
        }
        out += field.key + " = " + field.get() + "\n";
    }
    return out;
}

// Comma-separated numbers, e.g. "0.1,0.5,0.9".
inline std::vector<double> parse_value_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& cell : csv::split(text)) {
        const std::string v = detail::trim(cell);
        if (v.empty()) continue;
        out.push_back(detail::parse_number<double>(v, "value list"));
    }
    return out;
}

}  // namespace sdagrin
