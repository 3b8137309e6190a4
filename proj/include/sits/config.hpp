#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sits/core.hpp"
#include "sits/encodings.hpp"
#include "sits/model.hpp"
#include "sits/sampling.hpp"
#include "sits/train.hpp"

// Run configuration: a sectioned key/value text format (strings quoted,
// integer lists bracketed). Serialization is canonical, so parse ->
// serialize -> parse is a fixed point; unknown sections or keys are errors.

namespace sits {

struct RunConfig {
    std::string task = "td";
    std::uint64_t seed = 42;
    std::string out;
    std::vector<std::string> inputs;
    std::vector<std::string> freq_inputs;
    GapSpec gap = GapSpec::range(3);
    ViTConfig vit;
    HeadConfig heads;
    OptimConfig optim;
    EncodingConfig enc;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read config: " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }
    std::string serialize() const;
    nlohmann::json to_json() const;
};

namespace cfgdetail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline long long parse_int(const std::string& v, const std::string& key) {
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("expected integer for '" + key + "', got '" + v + "'");
    }
    return out;
}

inline double parse_double(const std::string& v, const std::string& key) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("expected number for '" + key + "', got '" + v + "'");
    }
    return out;
}

inline std::string parse_string(const std::string& v, const std::string& key) {
    if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
        throw ConfigError("expected quoted string for '" + key + "', got '" + v + "'");
    }
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        if (v[i] == '\\' && i + 2 < v.size()) {
            ++i;
            out.push_back(v[i]);
        } else {
            out.push_back(v[i]);
        }
    }
    return out;
}

inline std::vector<std::string> split_list(const std::string& v, const std::string& key) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
        throw ConfigError("expected [list] for '" + key + "', got '" + v + "'");
    }
    std::vector<std::string> items;
    std::string body = v.substr(1, v.size() - 2);
    std::string cur;
    bool in_str = false;
    for (char ch : body) {
        if (ch == '"') in_str = !in_str;
        if (ch == ',' && !in_str) {
            items.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!trim(cur).empty()) items.push_back(trim(cur));
    return items;
}

inline std::string fmt_double(double d) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);
    (void)ec;
    return std::string(buf, p);
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out.push_back('\\');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace cfgdetail

inline RunConfig RunConfig::parse(const std::string& text) {
    using namespace cfgdetail;
    RunConfig cfg;
    std::string gap_mode = "range";
    std::vector<int> gap_list;
    int max_gap = 3;

    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("bad section header at line " + std::to_string(lineno));
            section = s.substr(1, s.size() - 2);
            if (section != "run" && section != "gaps" && section != "vit" && section != "heads" &&
                section != "optim" && section != "encoding") {
                throw ConfigError("unknown config section [" + section + "]");
            }
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        }
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        std::string qual = section + "." + key;

        if (qual == "run.task") cfg.task = parse_string(value, qual);
        else if (qual == "run.seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, qual));
        else if (qual == "run.out") cfg.out = parse_string(value, qual);
        else if (qual == "run.inputs") {
            cfg.inputs.clear();
            for (const auto& item : split_list(value, qual)) cfg.inputs.push_back(parse_string(item, qual));
        } else if (qual == "run.freq_inputs") {
            cfg.freq_inputs.clear();
            for (const auto& item : split_list(value, qual)) cfg.freq_inputs.push_back(parse_string(item, qual));
        } else if (qual == "gaps.mode") gap_mode = parse_string(value, qual);
        else if (qual == "gaps.max_gap") max_gap = static_cast<int>(parse_int(value, qual));
        else if (qual == "gaps.gaps") {
            gap_list.clear();
            for (const auto& item : split_list(value, qual)) gap_list.push_back(static_cast<int>(parse_int(item, qual)));
        } else if (qual == "vit.image_size") cfg.vit.image_size = static_cast<int>(parse_int(value, qual));
        else if (qual == "vit.patch_size") cfg.vit.patch_size = static_cast<int>(parse_int(value, qual));
        else if (qual == "vit.channels") cfg.vit.channels = static_cast<int>(parse_int(value, qual));
        else if (qual == "vit.dim") cfg.vit.dim = static_cast<int>(parse_int(value, qual));
        else if (qual == "vit.depth") cfg.vit.depth = static_cast<int>(parse_int(value, qual));
        else if (qual == "vit.heads") cfg.vit.heads = static_cast<int>(parse_int(value, qual));
        else if (qual == "vit.mlp_ratio") cfg.vit.mlp_ratio = static_cast<int>(parse_int(value, qual));
        else if (qual == "heads.td_mlp_layers") cfg.heads.td_mlp_layers = static_cast<int>(parse_int(value, qual));
        else if (qual == "heads.fp_decoder_layers") cfg.heads.fp_decoder_layers = static_cast<int>(parse_int(value, qual));
        else if (qual == "heads.ff_translator_layers") cfg.heads.ff_translator_layers = static_cast<int>(parse_int(value, qual));
        else if (qual == "heads.ff_decoder_layers") cfg.heads.ff_decoder_layers = static_cast<int>(parse_int(value, qual));
        else if (qual == "heads.decoder_dim") cfg.heads.decoder_dim = static_cast<int>(parse_int(value, qual));
        else if (qual == "heads.td_classes") cfg.heads.td_classes = static_cast<int>(parse_int(value, qual));
        else if (qual == "heads.fp_k") cfg.heads.fp_k = static_cast<int>(parse_int(value, qual));
        else if (qual == "optim.peak_lr") cfg.optim.peak_lr = parse_double(value, qual);
        else if (qual == "optim.weight_decay") cfg.optim.weight_decay = parse_double(value, qual);
        else if (qual == "optim.warmup_epochs") cfg.optim.warmup_epochs = static_cast<int>(parse_int(value, qual));
        else if (qual == "optim.epochs") cfg.optim.epochs = static_cast<int>(parse_int(value, qual));
        else if (qual == "optim.batch_size") cfg.optim.batch_size = static_cast<int>(parse_int(value, qual));
        else if (qual == "optim.stop_below") cfg.optim.stop_below = parse_double(value, qual);
        else if (qual == "encoding.base") cfg.enc.base = parse_double(value, qual);
        else if (qual == "encoding.year_epoch") cfg.enc.year_epoch = static_cast<int>(parse_int(value, qual));
        else throw ConfigError("unknown config key '" + qual + "'");
    }

    if (gap_mode == "range") {
        cfg.gap = GapSpec::range(max_gap);
    } else if (gap_mode == "set") {
        cfg.gap = GapSpec::of(std::set<int>(gap_list.begin(), gap_list.end()));
    } else {
        throw ConfigError("gaps.mode must be \"range\" or \"set\"");
    }
    return cfg;
}

inline std::string RunConfig::serialize() const {
    using namespace cfgdetail;
    std::ostringstream os;
    os << "[run]\n";
    os << "task = " << quote(task) << "\n";
    os << "seed = " << seed << "\n";
    os << "out = " << quote(out) << "\n";
    auto str_list = [](const std::vector<std::string>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += quote(v[i]);
        }
        return s + "]";
    };
    os << "inputs = " << str_list(inputs) << "\n";
    os << "freq_inputs = " << str_list(freq_inputs) << "\n";
    os << "\n[gaps]\n";
    os << "mode = " << quote(gap.mode == GapSpec::Mode::range ? "range" : "set") << "\n";
    os << "max_gap = " << gap.max_gap << "\n";
    os << "gaps = [";
    bool first = true;
    for (int g : gap.gaps) {
        if (!first) os << ", ";
        os << g;
        first = false;
    }
    os << "]\n";
    os << "\n[vit]\n";
    os << "image_size = " << vit.image_size << "\n";
    os << "patch_size = " << vit.patch_size << "\n";
    os << "channels = " << vit.channels << "\n";
    os << "dim = " << vit.dim << "\n";
    os << "depth = " << vit.depth << "\n";
    os << "heads = " << vit.heads << "\n";
    os << "mlp_ratio = " << vit.mlp_ratio << "\n";
    os << "\n[heads]\n";
    os << "td_mlp_layers = " << heads.td_mlp_layers << "\n";
    os << "fp_decoder_layers = " << heads.fp_decoder_layers << "\n";
    os << "ff_translator_layers = " << heads.ff_translator_layers << "\n";
    os << "ff_decoder_layers = " << heads.ff_decoder_layers << "\n";
    os << "decoder_dim = " << heads.decoder_dim << "\n";
    os << "td_classes = " << heads.td_classes << "\n";
    os << "fp_k = " << heads.fp_k << "\n";
    os << "\n[optim]\n";
    os << "peak_lr = " << fmt_double(optim.peak_lr) << "\n";
    os << "weight_decay = " << fmt_double(optim.weight_decay) << "\n";
    os << "warmup_epochs = " << optim.warmup_epochs << "\n";
    os << "epochs = " << optim.epochs << "\n";
    os << "batch_size = " << optim.batch_size << "\n";
    os << "stop_below = " << fmt_double(optim.stop_below) << "\n";
    os << "\n[encoding]\n";
    os << "base = " << fmt_double(enc.base) << "\n";
    os << "year_epoch = " << enc.year_epoch << "\n";
    return os.str();
}

inline nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["run"] = {{"task", task}, {"seed", seed}, {"out", out}, {"inputs", inputs},
                {"freq_inputs", freq_inputs}};
    j["gaps"] = {{"mode", gap.mode == GapSpec::Mode::range ? "range" : "set"},
                 {"max_gap", gap.max_gap},
                 {"gaps", std::vector<int>(gap.gaps.begin(), gap.gaps.end())}};
    j["vit"] = {{"image_size", vit.image_size}, {"patch_size", vit.patch_size},
                {"channels", vit.channels},     {"dim", vit.dim},
                {"depth", vit.depth},           {"heads", vit.heads},
                {"mlp_ratio", vit.mlp_ratio}};
    j["heads"] = {{"td_mlp_layers", heads.td_mlp_layers},
                  {"fp_decoder_layers", heads.fp_decoder_layers},
                  {"ff_translator_layers", heads.ff_translator_layers},
                  {"ff_decoder_layers", heads.ff_decoder_layers},
                  {"decoder_dim", heads.decoder_dim},
                  {"td_classes", heads.td_classes},
                  {"fp_k", heads.fp_k}};
    j["optim"] = {{"peak_lr", optim.peak_lr},       {"weight_decay", optim.weight_decay},
                  {"warmup_epochs", optim.warmup_epochs}, {"epochs", optim.epochs},
                  {"batch_size", optim.batch_size}, {"stop_below", optim.stop_below}};
    j["encoding"] = {{"base", enc.base}, {"year_epoch", enc.year_epoch}};
    return j;
}

}  // namespace sits
