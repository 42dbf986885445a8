// Command-line surface: dataset synthesis, training, generation, evaluation,
// and static analysis of the generator/discriminator ensemble.

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gantts/train.hpp"

namespace {

using namespace gantts;

constexpr char kFeatureMagic[4] = {'G', 'T', 'C', 'F'};

struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

const char* kUsage =
    "usage: gantts <command> [flags]\n"
    "\n"
    "commands:\n"
    "  make-dataset --config F --out DIR --count N\n"
    "      synthesize N conditioned clips: clip_#####.wav (mu-law domain) +\n"
    "      clip_#####.feat (conditioning features) + manifest.txt\n"
    "  train --config F --out DIR [--ensemble NAME] [--seed S] [--resume CKPT] [--quiet]\n"
    "      run adversarial training; writes train.log, sn.log and checkpoints\n"
    "  generate --checkpoint CKPT --features F --out W [--length-frames L] [--mulaw]\n"
    "      synthesize one clip from EMA weights with standing statistics;\n"
    "      output is linear audio unless --mulaw keeps the companded domain\n"
    "  evaluate --gen DIR --real DIR [--matched] --out REPORT\n"
    "      Frechet/kernel speech distances between two directories of WAVs\n"
    "  analyze --profile {toy|full}\n"
    "      generator layer/receptive-field/FLOP analysis + discriminator table\n"
    "  ablation --name NAME [--profile {toy|full}]\n"
    "      resolve a discriminator ensemble configuration and list its members\n";

struct FlagSpec {
    std::set<std::string> valued;
    std::set<std::string> boolean;
};

std::map<std::string, std::string> parse_flags(const std::vector<std::string>& args,
                                               const FlagSpec& spec) {
    std::map<std::string, std::string> out;
    for (size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0) throw usage_error("unexpected argument: " + a);
        const std::string name = a.substr(2);
        if (spec.boolean.count(name)) {
            out[name] = "1";
            continue;
        }
        if (!spec.valued.count(name)) throw usage_error("unknown flag: --" + name);
        if (i + 1 >= args.size()) throw usage_error("missing value for --" + name);
        out[name] = args[++i];
    }
    return out;
}

const std::string& need(const std::map<std::string, std::string>& flags, const std::string& key) {
    auto it = flags.find(key);
    if (it == flags.end()) throw usage_error("missing required flag --" + key);
    return it->second;
}

i64 need_i64(const std::map<std::string, std::string>& flags, const std::string& key) {
    const std::string& v = need(flags, key);
    size_t n = 0;
    i64 out = 0;
    try {
        out = std::stoll(v, &n);
    } catch (const std::exception&) {
        throw usage_error("bad integer for --" + key + ": " + v);
    }
    if (n != v.size()) throw usage_error("bad integer for --" + key + ": " + v);
    return out;
}

std::string clip_stem(i64 index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip_%05" PRId64, index);
    return buf;
}

// Reconstructs the training configuration stored in a checkpoint's meta.txt.
TrainConfig config_of_checkpoint(const std::string& dir, i64* step_out) {
    std::ifstream meta(dir + "/meta.txt");
    check(meta.good(), "cannot read " + dir + "/meta.txt");
    std::string line, cfg_text;
    i64 step = -1;
    while (std::getline(meta, line)) {
        if (line.rfind("step=", 0) == 0)
            step = std::stoll(line.substr(5));
        else if (line.rfind("last_loss_d=", 0) == 0 || line.rfind("last_loss_g=", 0) == 0)
            continue;
        else
            cfg_text += line + "\n";
    }
    check(step >= 0, "checkpoint meta missing step= in " + dir);
    TrainConfig cfg;
    apply_config_text(cfg, cfg_text);
    cfg.validate();
    if (step_out) *step_out = step;
    return cfg;
}

std::vector<std::vector<double>> read_wav_dir(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") paths.push_back(e.path().string());
    check(!paths.empty(), "no .wav files in " + dir);
    std::sort(paths.begin(), paths.end());
    std::vector<std::vector<double>> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(read_wav(p).samples);
    return out;
}

int cmd_make_dataset(const std::vector<std::string>& args) {
    auto flags = parse_flags(args, {{"config", "out", "count"}, {}});
    TrainConfig cfg = load_config(need(flags, "config"));
    const std::string out_dir = need(flags, "out");
    const i64 count = need_i64(flags, "count");
    if (count < 1) throw usage_error("--count must be >= 1");
    std::filesystem::create_directories(out_dir);
    for (i64 i = 0; i < count; ++i) {
        Example ex = eval_example(cfg.dataset, cfg.seed, static_cast<u64>(i));
        WavClip clip;
        clip.sample_rate = cfg.dataset.sample_rate;
        clip.samples.assign(ex.waveform.raw(), ex.waveform.raw() + ex.waveform.numel());
        write_wav(out_dir + "/" + clip_stem(i) + ".wav", clip);
        write_matrix(out_dir + "/" + clip_stem(i) + ".feat", kFeatureMagic, ex.features.dim(0),
                     ex.features.dim(1), ex.features.raw());
    }
    std::ofstream manifest(out_dir + "/manifest.txt", std::ios::trunc);
    manifest << "count=" << count << "\n" << cfg.serialize();
    check(manifest.good(), "cannot write " + out_dir + "/manifest.txt");
    std::cout << "wrote " << count << " clips to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::vector<std::string>& args) {
    auto flags = parse_flags(args, {{"config", "out", "ensemble", "seed", "resume"}, {"quiet"}});
    TrainConfig cfg = load_config(need(flags, "config"));
    if (flags.count("ensemble")) cfg.ensemble = flags.at("ensemble");
    if (flags.count("seed")) cfg.seed = static_cast<u64>(need_i64(flags, "seed"));
    cfg.validate();
    TrainHooks hooks;
    hooks.quiet = flags.count("quiet") > 0;
    const std::string resume = flags.count("resume") ? flags.at("resume") : "";
    train(cfg, need(flags, "out"), resume, hooks);
    return 0;
}

int cmd_generate(const std::vector<std::string>& args) {
    auto flags =
        parse_flags(args, {{"checkpoint", "features", "out", "length-frames"}, {"mulaw"}});
    const std::string ckpt = need(flags, "checkpoint");
    i64 step = 0;
    TrainConfig cfg = config_of_checkpoint(ckpt, &step);
    GeneratorPlan gplan = cfg.generator_plan();
    ParamStore ema = ParamStore::load(ckpt + "/ema.gtts");

    i64 rows = 0, cols = 0;
    std::vector<double> feat = read_matrix(need(flags, "features"), kFeatureMagic, &rows, &cols);
    check(cols == gplan.feature_dim, "feature file has " + std::to_string(cols) +
                                         " columns, generator expects " +
                                         std::to_string(gplan.feature_dim));
    i64 frames = rows;
    if (flags.count("length-frames")) {
        frames = need_i64(flags, "length-frames");
        if (frames < 1 || frames > rows)
            throw usage_error("--length-frames must be in [1, " + std::to_string(rows) + "]");
    }

    // Standing statistics over the same conditioning pool the training-time
    // evaluation uses, keyed by the checkpoint step.
    std::vector<Tensor> pool;
    pool.reserve(static_cast<size_t>(cfg.eval_clips));
    for (i64 i = 0; i < cfg.eval_clips; ++i)
        pool.push_back(eval_example(cfg.dataset, cfg.seed, static_cast<u64>(i)).features);
    auto [es, sigs] = prepare_inference_store(cfg, gplan, ema, pool, static_cast<u64>(step));

    Tensor cond = Tensor::zeros({1, frames, gplan.feature_dim});
    std::memcpy(cond.raw(), feat.data(),
                static_cast<size_t>(frames * gplan.feature_dim) * sizeof(double));
    std::vector<Tensor> masks = make_masks({frames}, gplan);
    Rng zr = Rng::for_purpose(cfg.seed, "generate", static_cast<u64>(step));
    Tensor z = draw_latent_batch(gplan, 1, zr);
    ParamAccess pa{&es, nullptr, &sigs};
    Tensor y = generator_forward(gplan, pa, cond, z, BnMode::infer, &masks);

    WavClip clip;
    clip.sample_rate = cfg.dataset.sample_rate;
    clip.samples.assign(y.raw(), y.raw() + y.numel());
    if (!flags.count("mulaw"))
        for (double& s : clip.samples) s = mulaw_inverse(s, cfg.dataset.mu);
    write_wav(need(flags, "out"), clip);
    std::cout << "wrote " << clip.samples.size() << " samples to " << flags.at("out") << "\n";
    return 0;
}

int cmd_evaluate(const std::vector<std::string>& args) {
    auto flags = parse_flags(args, {{"gen", "real", "out"}, {"matched"}});
    auto gen = read_wav_dir(need(flags, "gen"));
    auto real = read_wav_dir(need(flags, "real"));
    FeatureExtractorConfig fcfg;
    DistanceReport rep = estimate_distances(gen, real, flags.count("matched") > 0, fcfg);
    std::ostringstream out;
    out << "n_gen " << rep.n_gen << "\n";
    out << "n_real " << rep.n_real << "\n";
    char buf[64];
    if (rep.has_conditional) {
        std::snprintf(buf, sizeof buf, "cfdsd_s %.6f\nckdsd_s %.6f\n", rep.cfdsd_s, rep.ckdsd_s);
        out << buf;
    }
    if (rep.has_unconditional) {
        std::snprintf(buf, sizeof buf, "fdsd_s %.6f\nkdsd_s %.6f\n", rep.fdsd_s, rep.kdsd_s);
        out << buf;
    }
    std::ofstream report(need(flags, "out"), std::ios::trunc);
    report << out.str();
    check(report.good(), "cannot write " + flags.at("out"));
    std::cout << out.str();
    return 0;
}

int cmd_analyze(const std::vector<std::string>& args) {
    auto flags = parse_flags(args, {{"profile"}, {}});
    const std::string profile = need(flags, "profile");
    TrainConfig cfg;
    cfg.apply_profile(profile);
    GeneratorPlan gplan = cfg.generator_plan();
    GeneratorAnalysis an = analyze_generator(gplan);

    std::cout << "profile: " << profile << "\n";
    std::cout << "generator_layers: " << an.layer_count << "\n";
    std::cout << "generator_receptive_field_steps: " << an.receptive_field_steps << "\n";
    std::cout << "generator_receptive_field_steps_exact: " << an.receptive_field_steps_exact
              << "\n";
    std::cout << "generator_influence_width_samples: " << an.influence_width_samples << "\n";
    char fbuf[64];
    std::snprintf(fbuf, sizeof fbuf, "%.1f", an.flops_per_sample);
    std::cout << "generator_flops_per_sample: " << fbuf << "\n";
    std::cout << "generator_trace:\n";
    for (const TraceRow& row : an.trace)
        std::cout << "  " << row.label << " t " << row.t << " ch " << row.ch << "\n";

    EnsembleConfig ens = ablation_config("rwd_star_240", cfg.ensemble_profile());
    const i64 clip = cfg.dataset.clip_samples();
    std::cout << "discriminators (" << ens.name << ", clip " << clip << "):\n";
    for (const auto& m : ens.members) {
        DiscriminatorPlan plan = plan_discriminator(m.cfg);
        std::cout << "  " << m.name << " k " << m.cfg.k << " conditional "
                  << (m.cfg.conditional ? 1 : 0) << " omega " << m.cfg.omega << " factors ";
        for (size_t i = 0; i < plan.factors.size(); ++i)
            std::cout << (i ? "," : "") << plan.factors[i];
        if (plan.factors.empty()) std::cout << "-";
        const i64 span = plan.window_span();
        const i64 support = m.cfg.conditional ? (clip - span) / m.cfg.lambda + 1 : clip - span + 1;
        std::cout << " blocks " << plan.block_count() << " depth " << plan.depth() << " span "
                  << span << " window_support " << support << "\n";
    }
    return 0;
}

int cmd_ablation(const std::vector<std::string>& args) {
    auto flags = parse_flags(args, {{"name", "profile"}, {}});
    const std::string name = need(flags, "name");
    TrainConfig cfg;
    cfg.apply_profile(flags.count("profile") ? flags.at("profile") : "full");
    EnsembleConfig ens = ablation_config(name, cfg.ensemble_profile());
    std::cout << "ensemble: " << ens.name << "\n";
    std::cout << "members: " << ens.members.size() << "\n";
    for (const auto& m : ens.members) {
        DiscriminatorPlan plan = plan_discriminator(m.cfg);
        std::cout << m.name << " k " << m.cfg.k << " conditional " << (m.cfg.conditional ? 1 : 0)
                  << " omega " << m.cfg.omega << " span " << plan.window_span() << " blocks "
                  << plan.block_count() << " depth " << plan.depth() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << kUsage;
        return 1;
    }
    const std::string cmd = argv[1];
    std::vector<std::string> args(argv + 2, argv + argc);
    try {
        if (cmd == "make-dataset") return cmd_make_dataset(args);
        if (cmd == "train") return cmd_train(args);
        if (cmd == "generate") return cmd_generate(args);
        if (cmd == "evaluate") return cmd_evaluate(args);
        if (cmd == "analyze") return cmd_analyze(args);
        if (cmd == "ablation") return cmd_ablation(args);
        std::cerr << "unknown command: " << cmd << "\n" << kUsage;
        return 1;
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << "\n" << kUsage;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
