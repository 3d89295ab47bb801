#include "fusion/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fusion {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::defaults() {
    Config config;
    auto& v = config.values_;
    v["dataset.classes"] = "4";
    v["dataset.per_class"] = "32";
    v["dataset.ir_width"] = "160";
    v["dataset.ir_height"] = "120";
    v["dataset.min_frames"] = "36";
    v["dataset.max_frames"] = "64";
    v["dataset.bit_depth"] = "8";
    v["split.kind"] = "cv";
    v["split.cs_train_subjects"] = "1,2,4,5,8,9,13,14,15,16,17,18,19,25,27,28,31,34,35,38";
    v["split.validation_fraction"] = "0.05";
    v["model.class_count"] = "4";
    v["model.width_multiplier"] = "0.25";
    v["model.clip_length"] = "8";
    v["model.mode"] = "fusion";
    v["model.pose_feature_dim"] = "512";
    v["model.ir_feature_dim"] = "512";
    v["model.logit_fusion"] = "false";
    v["model.mlp_dropout"] = "false";
    v["train.batch_size"] = "16";
    v["train.learning_rate"] = "0.0001";
    v["train.clip_norm"] = "10";
    v["train.epochs"] = "50";
    v["train.augment"] = "true";
    v["train.eval_sampling"] = "midpoint";
    v["train.early_stop_accuracy"] = "2";  // above 1 disables early stopping
    v["ablate.modes"] = "pose_only,ir_only,fusion";
    v["ablate.T"] = "8,12,16,20";
    v["ablate.seeds"] = "3";
    v["ablate.epochs"] = "6";
    v["ablate.width_multiplier"] = "0.125";
    return config;
}

Config Config::load(const std::string& path) {
    Config config = defaults();
    if (!path.empty()) config.apply_file(path);
    return config;
}

void Config::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config: cannot open " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config: " + path + ":" + std::to_string(line_no) +
                             ": expected 'key = value', got '" + text + "'");
        }
        set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    }
}

void Config::apply_override(const std::string& key_equals_value) {
    const auto eq = key_equals_value.find('=');
    if (eq == std::string::npos) {
        throw UsageError("override '" + key_equals_value + "' must have the form key=value");
    }
    set(trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw UsageError("unknown config key '" + key + "'");
    }
    it->second = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw UsageError("unknown config key '" + key + "'");
    }
    return it->second;
}

double Config::number(const std::string& key) const {
    const std::string& s = get(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' is not a number: '" + s + "'");
    }
}

Index Config::integer(const std::string& key) const {
    const std::string& s = get(key);
    Index v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw UsageError("config key '" + key + "' is not an integer: '" + s + "'");
    }
    return v;
}

bool Config::flag(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw UsageError("config key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<std::string> Config::list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream stream(get(key));
    std::string item;
    while (std::getline(stream, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<Index> Config::integer_list(const std::string& key) const {
    std::vector<Index> out;
    for (const std::string& item : list(key)) {
        Index v = 0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
            throw UsageError("config key '" + key + "' holds a non-integer item: '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::string Config::dump() const {
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key + " = " + value + "\n";
    }
    return out;
}

nlohmann::json Config::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : values_) j[key] = value;
    return j;
}

}  // namespace fusion
