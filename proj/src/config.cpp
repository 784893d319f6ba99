#include "frog/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "frog/errors.hpp"

namespace frog {

double TrainConfig::position_lr(long long iter) const {
    if (iterations <= 1) return lr_position;
    const double frac = std::clamp(static_cast<double>(iter) / (iterations - 1), 0.0, 1.0);
    return lr_position * std::pow(lr_position_final / lr_position, frac);
}

void TrainConfig::validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    for (double lr : {lr_position, lr_position_final, lr_scale, lr_rotation, lr_opacity, lr_sh,
                      lr_embedding, lr_mlp, lr_tables}) {
        if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
    }
    if (sh_degree < 0 || sh_degree > 3) throw ConfigError("sh_degree must lie in [0,3]");
    if (embed_dim < 1 || temporal_dim < 1) throw ConfigError("embedding dims must be >= 1");
    if (mlp_hidden_layers < 1 || mlp_hidden_width < 1) {
        throw ConfigError("mlp shape must be positive");
    }
    if (loss.k_neighbors < 1) throw ConfigError("knn_k must be >= 1");
    if (loss.lambda_emb < 0.0 || loss.lambda_w < 0.0) {
        throw ConfigError("loss weights must be >= 0");
    }
    if (loss.dssim_active_span > loss.dssim_period) {
        throw ConfigError("dssim_active_span must not exceed dssim_period");
    }
    if (sampling.top_fraction <= 0.0 || sampling.top_fraction > 1.0) {
        throw ConfigError("sampling_top_fraction must lie in (0,1]");
    }
    if (sampling.max_new_per_pass < 1) throw ConfigError("sampling_max_new must be >= 1");
    if (densify.grad_threshold <= 0.0 || densify.split_scale_threshold <= 0.0) {
        throw ConfigError("densify thresholds must be positive");
    }
    if (densify.start_iter >= densify.stop_iter) {
        throw ConfigError("densify_start must precede densify_stop");
    }
    if (opacity_k < 0.0) throw ConfigError("opacity_k must be >= 0");
}

namespace {

struct KeyHandler {
    std::function<void(TrainConfig*, const std::string&)> set;
};

long long parse_ll(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long long out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for key " + key + ": " + v);
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad number for key " + key + ": " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("bad boolean for key " + key + ": " + v);
}

const std::map<std::string, KeyHandler>& handlers() {
    static const std::map<std::string, KeyHandler> table = {
        {"iterations", {[](TrainConfig* c, const std::string& v) { c->iterations = parse_ll("iterations", v); }}},
        {"seed", {[](TrainConfig* c, const std::string& v) { c->seed = static_cast<std::uint64_t>(parse_ll("seed", v)); }}},
        {"eval_every", {[](TrainConfig* c, const std::string& v) { c->eval_every = parse_ll("eval_every", v); }}},
        {"checkpoint_every", {[](TrainConfig* c, const std::string& v) { c->checkpoint_every = parse_ll("checkpoint_every", v); }}},
        {"deform_warmup", {[](TrainConfig* c, const std::string& v) { c->deform_warmup = parse_ll("deform_warmup", v); }}},
        {"sh_degree", {[](TrainConfig* c, const std::string& v) { c->sh_degree = static_cast<int>(parse_ll("sh_degree", v)); }}},
        {"embed_dim", {[](TrainConfig* c, const std::string& v) { c->embed_dim = static_cast<int>(parse_ll("embed_dim", v)); }}},
        {"temporal_dim", {[](TrainConfig* c, const std::string& v) { c->temporal_dim = static_cast<int>(parse_ll("temporal_dim", v)); }}},
        {"mlp_hidden_layers", {[](TrainConfig* c, const std::string& v) { c->mlp_hidden_layers = static_cast<int>(parse_ll("mlp_hidden_layers", v)); }}},
        {"mlp_hidden_width", {[](TrainConfig* c, const std::string& v) { c->mlp_hidden_width = static_cast<int>(parse_ll("mlp_hidden_width", v)); }}},
        {"fine_table_divisor", {[](TrainConfig* c, const std::string& v) { c->fine_table_divisor = static_cast<int>(parse_ll("fine_table_divisor", v)); }}},
        {"coarse_table_divisor", {[](TrainConfig* c, const std::string& v) { c->coarse_table_divisor = static_cast<int>(parse_ll("coarse_table_divisor", v)); }}},
        {"fine_table_len", {[](TrainConfig* c, const std::string& v) { c->fine_table_len = static_cast<int>(parse_ll("fine_table_len", v)); }}},
        {"coarse_table_len", {[](TrainConfig* c, const std::string& v) { c->coarse_table_len = static_cast<int>(parse_ll("coarse_table_len", v)); }}},
        {"fusion_mode", {[](TrainConfig* c, const std::string& v) { c->fusion_mode = fusion_mode_from_string(v); }}},
        {"opacity_mode", {[](TrainConfig* c, const std::string& v) { c->opacity_mode = opacity_mode_from_string(v); }}},
        {"opacity_k", {[](TrainConfig* c, const std::string& v) { c->opacity_k = parse_double("opacity_k", v); }}},
        {"deform_sh_dc_only", {[](TrainConfig* c, const std::string& v) { c->deform_sh_dc_only = parse_bool("deform_sh_dc_only", v); }}},
        {"lr_position", {[](TrainConfig* c, const std::string& v) { c->lr_position = parse_double("lr_position", v); }}},
        {"lr_position_final", {[](TrainConfig* c, const std::string& v) { c->lr_position_final = parse_double("lr_position_final", v); }}},
        {"lr_scale", {[](TrainConfig* c, const std::string& v) { c->lr_scale = parse_double("lr_scale", v); }}},
        {"lr_rotation", {[](TrainConfig* c, const std::string& v) { c->lr_rotation = parse_double("lr_rotation", v); }}},
        {"lr_opacity", {[](TrainConfig* c, const std::string& v) { c->lr_opacity = parse_double("lr_opacity", v); }}},
        {"lr_sh", {[](TrainConfig* c, const std::string& v) { c->lr_sh = parse_double("lr_sh", v); }}},
        {"lr_embedding", {[](TrainConfig* c, const std::string& v) { c->lr_embedding = parse_double("lr_embedding", v); }}},
        {"lr_mlp", {[](TrainConfig* c, const std::string& v) { c->lr_mlp = parse_double("lr_mlp", v); }}},
        {"lr_tables", {[](TrainConfig* c, const std::string& v) { c->lr_tables = parse_double("lr_tables", v); }}},
        {"lambda_emb", {[](TrainConfig* c, const std::string& v) { c->loss.lambda_emb = parse_double("lambda_emb", v); }}},
        {"lambda_w", {[](TrainConfig* c, const std::string& v) { c->loss.lambda_w = parse_double("lambda_w", v); }}},
        {"knn_k", {[](TrainConfig* c, const std::string& v) { c->loss.k_neighbors = static_cast<int>(parse_ll("knn_k", v)); }}},
        {"dssim_start_iter", {[](TrainConfig* c, const std::string& v) { c->loss.dssim_start_iter = parse_ll("dssim_start_iter", v); }}},
        {"dssim_period", {[](TrainConfig* c, const std::string& v) { c->loss.dssim_period = parse_ll("dssim_period", v); }}},
        {"dssim_active_span", {[](TrainConfig* c, const std::string& v) { c->loss.dssim_active_span = parse_ll("dssim_active_span", v); }}},
        {"densify_enable", {[](TrainConfig* c, const std::string& v) { c->densify.enabled = parse_bool("densify_enable", v); }}},
        {"densify_grad_threshold", {[](TrainConfig* c, const std::string& v) { c->densify.grad_threshold = parse_double("densify_grad_threshold", v); }}},
        {"densify_interval", {[](TrainConfig* c, const std::string& v) { c->densify.interval = parse_ll("densify_interval", v); }}},
        {"densify_start", {[](TrainConfig* c, const std::string& v) { c->densify.start_iter = parse_ll("densify_start", v); }}},
        {"densify_stop", {[](TrainConfig* c, const std::string& v) { c->densify.stop_iter = parse_ll("densify_stop", v); }}},
        {"split_scale_threshold", {[](TrainConfig* c, const std::string& v) { c->densify.split_scale_threshold = parse_double("split_scale_threshold", v); }}},
        {"prune_opacity", {[](TrainConfig* c, const std::string& v) { c->densify.prune_opacity = parse_double("prune_opacity", v); }}},
        {"sampling_enable", {[](TrainConfig* c, const std::string& v) { c->sampling.enabled = parse_bool("sampling_enable", v); }}},
        {"sampling_interval", {[](TrainConfig* c, const std::string& v) { c->sampling.interval = parse_ll("sampling_interval", v); }}},
        {"sampling_start", {[](TrainConfig* c, const std::string& v) { c->sampling.start_iter = parse_ll("sampling_start", v); }}},
        {"sampling_stop", {[](TrainConfig* c, const std::string& v) { c->sampling.stop_iter = parse_ll("sampling_stop", v); }}},
        {"sampling_error_threshold", {[](TrainConfig* c, const std::string& v) { c->sampling.error_threshold = parse_double("sampling_error_threshold", v); }}},
        {"sampling_top_fraction", {[](TrainConfig* c, const std::string& v) { c->sampling.top_fraction = parse_double("sampling_top_fraction", v); }}},
        {"sampling_max_new", {[](TrainConfig* c, const std::string& v) { c->sampling.max_new_per_pass = static_cast<int>(parse_ll("sampling_max_new", v)); }}},
        {"sampling_neighbor_pool", {[](TrainConfig* c, const std::string& v) { c->sampling.neighbor_pool = static_cast<int>(parse_ll("sampling_neighbor_pool", v)); }}},
        {"anchor_opacity", {[](TrainConfig* c, const std::string& v) { c->sampling.anchor_opacity = parse_double("anchor_opacity", v); }}},
        {"init_embedding_sigma", {[](TrainConfig* c, const std::string& v) { c->init_embedding_sigma = parse_double("init_embedding_sigma", v); }}},
        {"init_opacity", {[](TrainConfig* c, const std::string& v) { c->init_opacity = parse_double("init_opacity", v); }}},
    };
    return table;
}

} // namespace

void apply_override(TrainConfig* cfg, const std::string& key, const std::string& value) {
    auto it = handlers().find(key);
    if (it == handlers().end()) {
        throw ConfigError("unknown config key: " + key);
    }
    it->second.set(cfg, value);
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string key, value;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            std::istringstream check(line);
            std::string leftover;
            if (check >> leftover) {
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            }
            continue;
        }
        auto trim = [](std::string s) {
            const auto begin = s.find_first_not_of(" \t\r");
            const auto end = s.find_last_not_of(" \t\r");
            return begin == std::string::npos ? std::string() : s.substr(begin, end - begin + 1);
        };
        key = trim(line.substr(0, eq));
        value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        apply_override(&cfg, key, value);
    }
    return cfg;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, v] : handlers()) keys.push_back(k);
    return keys;
}

} // namespace frog
