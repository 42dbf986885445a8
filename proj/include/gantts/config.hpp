#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gantts/dataset.hpp"
#include "gantts/distances.hpp"
#include "gantts/generator.hpp"
#include "gantts/rwd.hpp"

namespace gantts {

// ---------------------------------------------------------------------------
// Run configuration: profile presets + key=value file + CLI overrides
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::string profile = "toy";  // toy | full
    std::string ensemble = "rwd_star_240";
    u64 seed = 0;
    i64 steps = 2000;
    i64 batch_size = 8;
    double lr_g = 5e-5;
    double lr_d = 1e-4;  // single D step per G step, at doubled learning rate
    double beta1 = 0.0;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double ema_decay = 0.99;  // toy-horizon EMA; full profile uses 0.9999
    double ortho_beta = 1e-4;
    i64 sn_iters = 1;
    i64 sn_warmup = 20;
    i64 log_every = 250;
    i64 checkpoint_every = 1000;
    i64 eval_clips = 500;
    i64 standing_passes = 100;
    i64 standing_batch = 8;
    i64 gen_base_ch = 16;  // generator width preset (toy 16 / full 768)
    i64 d_base_ch = 16;    // discriminator channel schedule (toy 16..64 / full 64..512)
    i64 d_max_ch = 64;
    SyntheticDatasetConfig dataset;
    FeatureExtractorConfig features;

    void apply_profile(const std::string& name) {
        profile = name;
        if (name == "toy") {
            steps = 2000;
            batch_size = 8;
            eval_clips = 500;
            // EMA horizon scaled to the toy step budget (the full-scale decay
            // would keep the averaged weights pinned near initialization).
            ema_decay = 0.99;
            gen_base_ch = 16;
            d_base_ch = 16;
            d_max_ch = 64;
            dataset = SyntheticDatasetConfig{};
        } else if (name == "full") {
            steps = 1000000;
            batch_size = 1024;
            eval_clips = 10000;
            ema_decay = 0.9999;
            gen_base_ch = 768;
            d_base_ch = 64;
            d_max_ch = 512;
            dataset = SyntheticDatasetConfig{};
            dataset.tc = 400;
            dataset.feature_dim = 567;
        } else {
            throw error("unknown profile: " + name + " (expected toy or full)");
        }
    }

    GeneratorPlan generator_plan() const {
        GeneratorPlan p = profile == "full" ? full_generator_plan() : toy_generator_plan();
        p.feature_dim = dataset.feature_dim;
        p.reference_tc = dataset.tc;
        check(p.base_ch == gen_base_ch, "config: generator width preset is profile-fixed");
        return p;
    }

    EnsembleProfile ensemble_profile() const {
        return {dataset.clip_samples(), dataset.feature_dim, d_base_ch, d_max_ch, dataset.lambda};
    }

    EnsembleConfig ensemble_config() const { return ablation_config(ensemble, ensemble_profile()); }

    void set(const std::string& key, const std::string& value) {
        auto as_i = [&]() -> i64 {
            size_t n = 0;
            const i64 v = std::stoll(value, &n);
            check(n == value.size(), "config: bad integer for " + key + ": " + value);
            return v;
        };
        auto as_u = [&]() -> u64 {
            size_t n = 0;
            const u64 v = std::stoull(value, &n);
            check(n == value.size(), "config: bad integer for " + key + ": " + value);
            return v;
        };
        auto as_d = [&]() -> double {
            size_t n = 0;
            const double v = std::stod(value, &n);
            check(n == value.size(), "config: bad number for " + key + ": " + value);
            return v;
        };
        if (key == "profile") apply_profile(value);
        else if (key == "ensemble") ensemble = value;
        else if (key == "seed") seed = as_u();
        else if (key == "steps") steps = as_i();
        else if (key == "batch_size") batch_size = as_i();
        else if (key == "lr_g") lr_g = as_d();
        else if (key == "lr_d") lr_d = as_d();
        else if (key == "beta1") beta1 = as_d();
        else if (key == "beta2") beta2 = as_d();
        else if (key == "adam_eps") adam_eps = as_d();
        else if (key == "ema_decay") ema_decay = as_d();
        else if (key == "ortho_beta") ortho_beta = as_d();
        else if (key == "sn_iters") sn_iters = as_i();
        else if (key == "sn_warmup") sn_warmup = as_i();
        else if (key == "log_every") log_every = as_i();
        else if (key == "checkpoint_every") checkpoint_every = as_i();
        else if (key == "eval_clips") eval_clips = as_i();
        else if (key == "standing_passes") standing_passes = as_i();
        else if (key == "standing_batch") standing_batch = as_i();
        else if (key == "tc") dataset.tc = as_i();
        else if (key == "sample_rate") dataset.sample_rate = as_i();
        else if (key == "feature_dim") dataset.feature_dim = as_i();
        else if (key == "phonemes") dataset.phonemes = as_i();
        else if (key == "seg_min") dataset.seg_min = as_i();
        else if (key == "seg_max") dataset.seg_max = as_i();
        else if (key == "f0_min") dataset.f0_min = as_d();
        else if (key == "f0_max") dataset.f0_max = as_d();
        else if (key == "f0_step") dataset.f0_step = as_d();
        else if (key == "noise_floor") dataset.noise_floor = as_d();
        else if (key == "mu") dataset.mu = as_d();
        else if (key == "eval_window") features.window = as_i();
        else if (key == "eval_feature_dim") features.feature_dim = as_i();
        else throw error("config: unknown key: " + key);
    }

    void validate() const {
        check(steps >= 0, "config: steps must be >= 0");
        check(batch_size >= 1, "config: batch_size must be >= 1");
        check(log_every >= 1 && checkpoint_every >= 1, "config: cadences must be >= 1");
        check(eval_clips >= 2, "config: eval_clips must be >= 2");
        check(sn_iters >= 1 && sn_warmup >= 1, "config: spectral norm iterations must be >= 1");
        check(standing_passes >= 1 && standing_batch >= 1, "config: standing stats settings");
        dataset.validate();
        features.validate();
    }

    std::string serialize() const {
        std::ostringstream o;
        o << "profile=" << profile << "\n";
        o << "ensemble=" << ensemble << "\n";
        o << "seed=" << seed << "\n";
        o << "steps=" << steps << "\n";
        o << "batch_size=" << batch_size << "\n";
        o << "lr_g=" << lr_g << "\n";
        o << "lr_d=" << lr_d << "\n";
        o << "beta1=" << beta1 << "\n";
        o << "beta2=" << beta2 << "\n";
        o << "adam_eps=" << adam_eps << "\n";
        o << "ema_decay=" << ema_decay << "\n";
        o << "ortho_beta=" << ortho_beta << "\n";
        o << "sn_iters=" << sn_iters << "\n";
        o << "sn_warmup=" << sn_warmup << "\n";
        o << "log_every=" << log_every << "\n";
        o << "checkpoint_every=" << checkpoint_every << "\n";
        o << "eval_clips=" << eval_clips << "\n";
        o << "standing_passes=" << standing_passes << "\n";
        o << "standing_batch=" << standing_batch << "\n";
        o << "tc=" << dataset.tc << "\n";
        o << "sample_rate=" << dataset.sample_rate << "\n";
        o << "feature_dim=" << dataset.feature_dim << "\n";
        o << "phonemes=" << dataset.phonemes << "\n";
        o << "seg_min=" << dataset.seg_min << "\n";
        o << "seg_max=" << dataset.seg_max << "\n";
        o << "f0_min=" << dataset.f0_min << "\n";
        o << "f0_max=" << dataset.f0_max << "\n";
        o << "f0_step=" << dataset.f0_step << "\n";
        o << "noise_floor=" << dataset.noise_floor << "\n";
        o << "mu=" << dataset.mu << "\n";
        o << "eval_window=" << features.window << "\n";
        o << "eval_feature_dim=" << features.feature_dim << "\n";
        return o.str();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

// key=value lines; '#' starts a comment; keys applied in file order (put
// profile= first so later keys override its presets).
inline void apply_config_text(TrainConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    i64 lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        check(eq != std::string::npos, "config: line " + std::to_string(lineno) + " is not key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        check(!key.empty(), "config: empty key at line " + std::to_string(lineno));
        cfg.set(key, value);
    }
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    TrainConfig cfg;
    apply_config_text(cfg, text);
    cfg.validate();
    return cfg;
}

}  // namespace gantts
