#include "aadv/harness.hpp"

#include "aadv/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace aadv {

namespace fs = std::filesystem;

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    const std::pair<const char*, const char*> defaults[] = {
        {"seed", "1"},
        {"out", "out"},
        {"model", ""},
        {"count", "100"},
        {"eps", "16/255"},
        {"iters", "500"},
        {"c", "0.1"},
        {"gamma", "1.0"},
        {"alpha_start", "0.1"},
        {"alpha_end", "100"},
        {"mu", "1.0"},
        {"beta", "0"},
        {"enc_lr", "0.01"},
        {"enc_momentum", "0.9"},
        {"encoder", "fc"},
        {"channel_shared", "0"},
        {"workers", "1"},
        {"dump_images", "0"},
        {"lambda_l1", "1.0"},
        {"tau_bin", "0.001"},
        {"ds_count", "1000"},
        {"ds_w", "16"},
        {"ds_h", "16"},
        {"ds_c", "1"},
        {"ds_k", "10"},
        {"epochs", "15"},
        {"batch", "16"},
        {"lr", "0.01"},
        {"momentum", "0.9"},
        {"acc_floor", "0.85"},
    };
    for (const auto& [k, v] : defaults) c.kv_.emplace_back(k, v);
    return c;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : kv_)
        if (k == key) {
            v = value;
            return;
        }
    kv_.emplace_back(key, value);
}

bool ExperimentConfig::has(const std::string& key) const {
    for (const auto& [k, v] : kv_)
        if (k == key) return true;
    return false;
}

const std::string& ExperimentConfig::get(const std::string& key) const {
    for (const auto& [k, v] : kv_)
        if (k == key) return v;
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

double ExperimentConfig::get_double(const std::string& key) const {
    return std::stod(get(key));
}

int ExperimentConfig::get_int(const std::string& key) const { return std::stoi(get(key)); }

bool ExperimentConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    return v == "1" || v == "true" || v == "yes";
}

std::uint64_t ExperimentConfig::get_seed() const {
    return static_cast<std::uint64_t>(std::stoull(get("seed")));
}

void ExperimentConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        const std::size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected key=value");
        set(line.substr(start, eq - start), line.substr(eq + 1));
    }
}

double parse_eps(const std::string& text) {
    const std::size_t slash = text.find('/');
    try {
        if (slash != std::string::npos) {
            const double num = std::stod(text.substr(0, slash));
            const double den = std::stod(text.substr(slash + 1));
            if (den == 0.0) throw std::invalid_argument("zero denominator");
            return num / den;
        }
        return std::stod(text);
    } catch (const std::exception&) {
        throw std::invalid_argument("bad eps value '" + text + "' (want decimal or a/b)");
    }
}

AttackConfig attack_config_from(const ExperimentConfig& cfg) {
    AttackConfig a;
    a.eps = parse_eps(cfg.get("eps"));
    a.iters = cfg.get_int("iters");
    a.c = cfg.get_double("c");
    a.gamma = cfg.get_double("gamma");
    a.alpha_start = cfg.get_double("alpha_start");
    a.alpha_end = cfg.get_double("alpha_end");
    a.mu = cfg.get_double("mu");
    a.beta = cfg.get_double("beta");
    a.enc_lr = cfg.get_double("enc_lr");
    a.enc_momentum = cfg.get_double("enc_momentum");
    a.seed = cfg.get_seed();
    a.channel_independent = !cfg.get_bool("channel_shared");
    a.tau_bin = cfg.get_double("tau_bin");
    const std::string& enc = cfg.get("encoder");
    if (enc == "fc")
        a.encoder = EncoderKind::FullyConnected;
    else if (enc == "conv")
        a.encoder = EncoderKind::ConvSmall;
    else
        throw std::invalid_argument("config: encoder must be 'fc' or 'conv', got '" + enc + "'");
    a.validate();
    return a;
}

std::uint64_t per_image_seed(std::uint64_t global_seed, std::size_t image_id) {
    std::uint64_t x = Rng::stream_seed(global_seed, "attack") + image_id;
    return Rng::splitmix64(x);
}

std::uint64_t AttackPlan::image_list_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t id : image_ids) {
        h ^= id;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Empty "model" means <out>/model.aadv, so --out alone relocates everything.
std::string model_path_from(const ExperimentConfig& cfg) {
    const std::string& m = cfg.get("model");
    if (!m.empty()) return m;
    return (fs::path(cfg.get("out")) / "model.aadv").string();
}

Dataset dataset_from(const ExperimentConfig& cfg) {
    return generate_synthetic(cfg.get_seed(), static_cast<std::size_t>(cfg.get_int("ds_count")),
                              static_cast<std::size_t>(cfg.get_int("ds_w")),
                              static_cast<std::size_t>(cfg.get_int("ds_h")),
                              static_cast<std::size_t>(cfg.get_int("ds_c")),
                              static_cast<std::size_t>(cfg.get_int("ds_k")));
}

AttackPlan prepare_plan(const ExperimentConfig& cfg) {
    AttackPlan plan;
    plan.model = load_model(model_path_from(cfg));
    plan.data = dataset_from(cfg);
    if (plan.data.width != plan.model.width || plan.data.height != plan.model.height ||
        plan.data.channels != plan.model.channels || plan.data.classes != plan.model.classes)
        throw DimensionError("plan: model/dataset geometry mismatch");

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < plan.data.size(); ++i) {
        if (!plan.data.is_val[i]) continue;
        if (plan.model.predict_class(plan.data.images[i]) == plan.data.labels[i])
            eligible.push_back(i);
    }
    const std::size_t count = static_cast<std::size_t>(cfg.get_int("count"));
    if (eligible.size() < count) throw ShortfallError(count, eligible.size());

    // Shuffle once with the image-sample stream, take a prefix: growing the
    // count never changes which images come first.
    Rng rng(Rng::stream_seed(cfg.get_seed(), "image-sample"));
    for (std::size_t i = eligible.size(); i > 1; --i)
        std::swap(eligible[i - 1], eligible[rng.below(i)]);
    plan.image_ids.assign(eligible.begin(), eligible.begin() + static_cast<long>(count));

    for (std::size_t id : plan.image_ids) {
        Rng trng(per_image_seed(cfg.get_seed(), id) ^ 0x7a72676554ull); // target stream
        const int truth = plan.data.labels[id];
        const int k = static_cast<int>(plan.model.classes);
        int target = static_cast<int>(trng.below(static_cast<std::uint64_t>(k - 1)));
        if (target >= truth) ++target;
        plan.targets.push_back(target);
    }
    return plan;
}

RunReport run_plan(const AttackPlan& plan, const ExperimentConfig& cfg, const AttackFn& fn,
                   const std::string& variant_name, bool* truncated) {
    const AttackConfig base = attack_config_from(cfg);
    const std::size_t total = plan.image_ids.size();
    std::vector<ImageRecord> records(total);
    std::vector<AttackResult> results(total);
    std::vector<std::string> errors(total);

    const int workers = std::max(1, cfg.get_int("workers"));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= total) return;
            const std::size_t id = plan.image_ids[i];
            AttackConfig acfg = base;
            acfg.seed = per_image_seed(base.seed, id);
            try {
                results[i] = fn(plan.model, plan.data.images[id], plan.targets[i], acfg);
            } catch (const std::exception& e) {
                errors[i] = e.what();
                continue;
            }
            const AttackResult& r = results[i];
            records[i] = ImageRecord{static_cast<int>(id),
                                     plan.targets[i],
                                     r.success,
                                     r.perturbation_norms.l0,
                                     r.perturbation_norms.l1,
                                     r.perturbation_norms.l2,
                                     r.perturbation_norms.linf,
                                     pixel_fraction(r.perturbation_norms.l0,
                                                    plan.model.pixel_count()),
                                     r.iterations,
                                     r.seconds};
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }

    RunReport rep;
    rep.config = cfg.entries();
    rep.config.emplace_back("resolved_eps", std::to_string(parse_eps(cfg.get("eps"))));
    rep.config.emplace_back("variant", variant_name);
    rep.config.emplace_back("image_list_hash", std::to_string(plan.image_list_hash()));
    std::string first_error;
    for (std::size_t i = 0; i < total; ++i) {
        if (errors[i].empty()) {
            rep.images.push_back(records[i]);
        } else if (first_error.empty()) {
            first_error = "image " + std::to_string(plan.image_ids[i]) + ": " + errors[i];
        }
    }
    // row order is by image id, independent of completion or plan order
    std::sort(rep.images.begin(), rep.images.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
    rep.finalize();
    if (!first_error.empty()) {
        // flush what we have, then surface the failure
        rep.config.emplace_back("truncated", "1");
        rep.config.emplace_back("truncation_error", first_error);
        if (truncated != nullptr) {
            *truncated = true;
            return rep;
        }
        throw NumericError("attack batch truncated: " + first_error);
    }
    return rep;
}

namespace {

void ensure_out_dir(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.get("out"));
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    return (fs::path(cfg.get("out")) / name).string();
}

void print_summary(const RunReport& rep, const std::string& name) {
    const Aggregates& a = rep.agg;
    std::printf("%-12s attempted=%zu asr=%s mean_l0=%.2f mean_pixfrac=%.2f%% mean_linf=%.5f\n",
                name.c_str(), a.attempted, a.asr ? std::to_string(*a.asr).c_str() : "null",
                a.mean_l0, a.mean_pixfrac, a.mean_linf);
}

} // namespace

int cmd_train(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    Dataset data = dataset_from(cfg);
    ClassifierModel model = make_conv_model(data.width, data.height, data.channels,
                                            data.classes, cfg.get_seed());
    TrainOptions opt;
    opt.epochs = cfg.get_int("epochs");
    opt.batch_size = cfg.get_int("batch");
    opt.lr = cfg.get_double("lr");
    opt.momentum = cfg.get_double("momentum");
    opt.seed = cfg.get_seed();
    TrainHistory hist = train(model, data, opt);
    const double val = hist.final_val_acc();
    std::printf("final val accuracy: %.4f (train %.4f)\n", val,
                hist.train_acc.empty() ? 0.0 : hist.train_acc.back());
    const fs::path model_path(model_path_from(cfg));
    if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
    save_model(model, model_path.string());
    std::printf("model written to %s\n", model_path.string().c_str());
    if (val < cfg.get_double("acc_floor")) {
        std::fprintf(stderr, "warning: val accuracy %.4f below floor %.4f; attacks will refuse this model\n",
                     val, cfg.get_double("acc_floor"));
    }
    return 0;
}

namespace {

/// Attacks refuse models below the accuracy floor (checked on the same
/// deterministic dataset the model was trained against).
void check_accuracy_floor(const ExperimentConfig& cfg, const AttackPlan& plan) {
    const double floor = cfg.get_double("acc_floor");
    const double acc = accuracy(plan.model, plan.data, true);
    if (acc < floor)
        throw std::runtime_error("model val accuracy " + std::to_string(acc) +
                                 " is below the floor " + std::to_string(floor));
}

void maybe_dump(const ExperimentConfig& cfg, const AttackPlan& plan, const RunReport& rep,
                const AttackFn& fn) {
    if (!cfg.get_bool("dump_images")) return;
    const AttackConfig base = attack_config_from(cfg);
    for (std::size_t i = 0; i < plan.image_ids.size(); ++i) {
        const std::size_t id = plan.image_ids[i];
        AttackConfig acfg = base;
        acfg.seed = per_image_seed(base.seed, id);
        AttackResult r = fn(plan.model, plan.data.images[id], plan.targets[i], acfg);
        dump_images(plan.data.images[id], r.x_adv, r.hard_mask,
                    out_path(cfg, "img_" + std::to_string(id)));
    }
    (void)rep;
}

} // namespace

int cmd_attack(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    AttackPlan plan = prepare_plan(cfg);
    check_accuracy_floor(cfg, plan);
    const AttackFn fn = [](const ClassifierModel& m, const Tensor& x, int t,
                           const AttackConfig& c) { return run_attack(m, x, t, c); };
    RunReport rep = run_plan(plan, cfg, fn, "masked");
    emit_report(rep, out_path(cfg, "attack_report.txt"));
    print_summary(rep, "masked");
    maybe_dump(cfg, plan, rep, fn);
    return 0;
}

int cmd_ablate(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    AttackPlan plan = prepare_plan(cfg);
    check_accuracy_floor(cfg, plan);

    RunReport full = run_plan(plan, cfg,
                              [](const ClassifierModel& m, const Tensor& x, int t,
                                 const AttackConfig& c) { return run_attack(m, x, t, c); },
                              "full");
    // Random baseline budget matches the full method's mean l0.
    const std::size_t k = static_cast<std::size_t>(std::lround(full.agg.mean_l0));
    const double lambda_l1 = cfg.get_double("lambda_l1");

    RunReport dense = run_plan(plan, cfg,
                               [](const ClassifierModel& m, const Tensor& x, int t,
                                  const AttackConfig& c) { return baseline_dense(m, x, t, c); },
                               "dense");
    RunReport random = run_plan(plan, cfg,
                                [k](const ClassifierModel& m, const Tensor& x, int t,
                                    const AttackConfig& c) { return baseline_random(m, x, t, c, k); },
                                "random");
    RunReport l1d = run_plan(plan, cfg,
                             [lambda_l1](const ClassifierModel& m, const Tensor& x, int t,
                                         const AttackConfig& c) {
                                 return baseline_l1_delta(m, x, t, c, lambda_l1);
                             },
                             "l1-delta");
    RunReport noenc = run_plan(plan, cfg,
                               [](const ClassifierModel& m, const Tensor& x, int t,
                                  const AttackConfig& c) { return baseline_no_encoder(m, x, t, c); },
                               "no-encoder");
    random.config.emplace_back("random_k", std::to_string(k));

    emit_report(full, out_path(cfg, "ablate_full.txt"));
    emit_report(dense, out_path(cfg, "ablate_dense.txt"));
    emit_report(random, out_path(cfg, "ablate_random.txt"));
    emit_report(l1d, out_path(cfg, "ablate_l1_delta.txt"));
    emit_report(noenc, out_path(cfg, "ablate_no_encoder.txt"));

    std::ofstream summary(out_path(cfg, "ablate_summary.txt"));
    summary << "variant asr mean_l0 mean_l2 mean_linf image_list_hash\n";
    auto row = [&](const char* name, const RunReport& r) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %s %.4f %.6f %.6f %llu\n", name,
                      r.agg.asr ? std::to_string(*r.agg.asr).c_str() : "null", r.agg.mean_l0,
                      r.agg.mean_l2, r.agg.mean_linf,
                      static_cast<unsigned long long>(plan.image_list_hash()));
        summary << buf;
    };
    row("full", full);
    row("dense", dense);
    row("random", random);
    row("l1-delta", l1d);
    row("no-encoder", noenc);
    summary.close();

    print_summary(full, "full");
    print_summary(dense, "dense");
    print_summary(random, "random");
    print_summary(l1d, "l1-delta");
    print_summary(noenc, "no-encoder");
    return 0;
}

int cmd_encoders(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    AttackPlan plan = prepare_plan(cfg);
    check_accuracy_floor(cfg, plan);

    auto with_encoder = [&](EncoderKind kind, const char* name) {
        ExperimentConfig sub = cfg;
        sub.set("encoder", kind == EncoderKind::FullyConnected ? "fc" : "conv");
        RunReport rep = run_plan(plan, sub,
                                 [](const ClassifierModel& m, const Tensor& x, int t,
                                    const AttackConfig& c) { return run_attack(m, x, t, c); },
                                 name);
        emit_report(rep, out_path(cfg, std::string("encoders_") + name + ".txt"));
        print_summary(rep, name);
        return rep;
    };
    RunReport fc = with_encoder(EncoderKind::FullyConnected, "fc");
    RunReport conv = with_encoder(EncoderKind::ConvSmall, "conv");

    std::ofstream summary(out_path(cfg, "encoders_summary.txt"));
    summary << "encoder asr mean_l0 mean_l2 mean_linf\n";
    auto row = [&](const char* name, const RunReport& r) {
        char buf[120];
        std::snprintf(buf, sizeof buf, "%s %s %.4f %.6f %.6f\n", name,
                      r.agg.asr ? std::to_string(*r.agg.asr).c_str() : "null", r.agg.mean_l0,
                      r.agg.mean_l2, r.agg.mean_linf);
        summary << buf;
    };
    row("fc", fc);
    row("conv", conv);
    return 0;
}

int cmd_report(const std::string& path) {
    RunReport rep = load_report(path);
    std::printf("report: %s\n", path.c_str());
    for (const auto& [k, v] : rep.config) std::printf("  %s = %s\n", k.c_str(), v.c_str());
    std::printf("images: %zu\n", rep.images.size());
    for (const ImageRecord& r : rep.images)
        std::printf("  id=%d target=%d success=%d l0=%.0f l2=%.4f linf=%.5f pixfrac=%.2f%% %.2fs\n",
                    r.id, r.target, r.success ? 1 : 0, r.l0, r.l2, r.linf, r.pixfrac, r.seconds);
    const Aggregates& a = rep.agg;
    std::printf("asr=%s mean_l0=%.2f mean_l2=%.4f mean_linf=%.5f mean_pixfrac=%.2f%%\n",
                a.asr ? std::to_string(*a.asr).c_str() : "null", a.mean_l0, a.mean_l2,
                a.mean_linf, a.mean_pixfrac);
    return 0;
}

} // namespace aadv
