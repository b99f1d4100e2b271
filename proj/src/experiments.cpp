// SPDX-License-Identifier: Apache-2.0
#include "dvp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dvp/checkpoint.hpp"
#include "dvp/grammar.hpp"
#include "dvp/stats.hpp"

namespace fs = std::filesystem;

namespace dvp {

namespace {

using json = nlohmann::ordered_json;

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string fmt_f(float v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", (double)v);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << text;
    out.flush();
    if (!out)
        throw std::runtime_error("short write: " + path);
}

json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

SynthConfig synth_config_from(const FlatConfig& cfg) {
    SynthConfig sc;
    sc.s = cfg.get_int("data.s", sc.s);
    sc.h = cfg.get_int("data.h", sc.h);
    sc.w = cfg.get_int("data.w", sc.w);
    sc.n_train = cfg.get_int("data.n_train", sc.n_train);
    sc.n_test = cfg.get_int("data.n_test", sc.n_test);
    sc.seed = cfg.get_u64("data.seed", sc.seed);
    sc.normal_frac = cfg.get_float("data.normal_frac", sc.normal_frac);
    sc.class_prob = cfg.get_float("data.class_prob", sc.class_prob);
    sc.noise_sd = cfg.get_float("data.noise_sd", sc.noise_sd);
    sc.intensity_delta = cfg.get_float("data.intensity_delta", sc.intensity_delta);
    return sc;
}

ModelConfig model_config_from(const FlatConfig& cfg, const SynthConfig& data_cfg) {
    ModelConfig mc;
    mc.s = data_cfg.s;
    mc.h = data_cfg.h;
    mc.w = data_cfg.w;
    mc.enc_c1 = cfg.get_int("model.enc_c1", mc.enc_c1);
    mc.enc_c2 = cfg.get_int("model.enc_c2", mc.enc_c2);
    mc.enc_c = cfg.get_int("model.enc_c", mc.enc_c);
    mc.n_latents = cfg.get_int("model.n_latents", mc.n_latents);
    mc.d = cfg.get_int("model.d", mc.d);
    mc.heads = cfg.get_int("model.heads", mc.heads);
    mc.d_llm = cfg.get_int("model.d_llm", mc.d_llm);
    mc.dec_layers = cfg.get_int("model.dec_layers", mc.dec_layers);
    mc.dec_heads = cfg.get_int("model.dec_heads", mc.dec_heads);
    mc.context = cfg.get_int("model.context", mc.context);
    mc.prefix_len = cfg.get_int("model.prefix_len", mc.prefix_len);
    mc.ff_mult = cfg.get_int("model.ff_mult", mc.ff_mult);
    mc.anchor_threshold = cfg.get_float("model.anchor_threshold", mc.anchor_threshold);
    return mc;
}

AblationFlags flags_from(const FlatConfig& cfg) {
    AblationFlags f = flags_for_variant(cfg.get_str("train.variant", "ours"));
    f.use_global = cfg.get_bool("train.use_global", f.use_global);
    f.use_local = cfg.get_bool("train.use_local", f.use_local);
    f.use_e = cfg.get_bool("train.use_e", f.use_e);
    f.use_prefix = cfg.get_bool("train.use_prefix", f.use_prefix);
    f.pixel_diff = cfg.get_bool("train.pixel_diff", f.pixel_diff);
    return f;
}

TrainConfig train_config_from(const FlatConfig& cfg) {
    TrainConfig tc;
    tc.epochs = cfg.get_int("train.epochs", tc.epochs);
    tc.batch_size = cfg.get_int("train.batch_size", tc.batch_size);
    tc.lr = cfg.get_float("train.lr", tc.lr);
    tc.seed = cfg.get_u64("train.seed", tc.seed);
    tc.pool_max = cfg.get_int("train.pool_max", tc.pool_max);
    tc.flags = flags_from(cfg);
    tc.clip_norm = cfg.get_float("train.clip_norm", tc.clip_norm);
    tc.lora = cfg.get_bool("train.lora", tc.lora);
    tc.lora_r = cfg.get_int("train.lora_r", tc.lora_r);
    tc.lora_alpha = cfg.get_float("train.lora_alpha", tc.lora_alpha);
    tc.run_dir = cfg.get_str("train.run_dir", "runs/run");
    tc.resume = cfg.get_bool("train.resume", false);
    tc.epoch_checkpoints = cfg.get_bool("train.epoch_checkpoints", tc.epoch_checkpoints);
    return tc;
}

// Echo every knob load_run needs back into the manifest config, so a run
// directory is self-describing.
void echo_resolved(FlatConfig& out, const std::string& data_dir, const ModelConfig& mc,
                   const TrainConfig& tc, const std::string& cls_path, int cls_c1,
                   int cls_c2) {
    out.set("data.dir", data_dir);
    out.set("model.enc_c1", std::to_string(mc.enc_c1));
    out.set("model.enc_c2", std::to_string(mc.enc_c2));
    out.set("model.enc_c", std::to_string(mc.enc_c));
    out.set("model.n_latents", std::to_string(mc.n_latents));
    out.set("model.d", std::to_string(mc.d));
    out.set("model.heads", std::to_string(mc.heads));
    out.set("model.d_llm", std::to_string(mc.d_llm));
    out.set("model.dec_layers", std::to_string(mc.dec_layers));
    out.set("model.dec_heads", std::to_string(mc.dec_heads));
    out.set("model.context", std::to_string(mc.context));
    out.set("model.prefix_len", std::to_string(mc.prefix_len));
    out.set("model.ff_mult", std::to_string(mc.ff_mult));
    out.set("model.anchor_threshold", fmt_f(mc.anchor_threshold));
    out.set("train.epochs", std::to_string(tc.epochs));
    out.set("train.batch_size", std::to_string(tc.batch_size));
    out.set("train.lr", fmt_f(tc.lr));
    out.set("train.seed", std::to_string(tc.seed));
    out.set("train.pool_max", std::to_string(tc.pool_max));
    out.set("train.clip_norm", fmt_f(tc.clip_norm));
    out.set("train.lora", tc.lora ? "true" : "false");
    out.set("train.lora_r", std::to_string(tc.lora_r));
    out.set("train.lora_alpha", fmt_f(tc.lora_alpha));
    out.set("train.use_global", tc.flags.use_global ? "true" : "false");
    out.set("train.use_local", tc.flags.use_local ? "true" : "false");
    out.set("train.use_e", tc.flags.use_e ? "true" : "false");
    out.set("train.use_prefix", tc.flags.use_prefix ? "true" : "false");
    out.set("train.pixel_diff", tc.flags.pixel_diff ? "true" : "false");
    out.set("train.run_dir", tc.run_dir);
    out.set("train.epoch_checkpoints", tc.epoch_checkpoints ? "true" : "false");
    if (tc.flags.use_e) {
        out.set("cls.path", cls_path);
        out.set("cls.c1", std::to_string(cls_c1));
        out.set("cls.c2", std::to_string(cls_c2));
    }
}

json nlg_json(const metrics::NlgScores& s) {
    return json{{"bleu1", s.bleu1}, {"bleu2", s.bleu2}, {"bleu3", s.bleu3},
                {"bleu4", s.bleu4}, {"rouge1", s.rouge1}, {"rouge2", s.rouge2},
                {"rougeL", s.rougeL}, {"meteor", s.meteor}};
}

// A finished run has a manifest, weights and a state file reporting at
// least the requested number of epochs.
bool run_complete(const std::string& run_dir, int want_epochs) {
    if (!fs::exists(fs::path(run_dir) / "manifest.json")) return false;
    if (!fs::exists(fs::path(run_dir) / "model.dvp")) return false;
    std::ifstream in(fs::path(run_dir) / "state.json");
    if (!in) return false;
    try {
        json st;
        in >> st;
        return st.value("completed_epochs", 0) >= want_epochs;
    } catch (const std::exception&) {
        return false;
    }
}

// Trains one generator run from a resolved config. With reuse=true a
// directory that already holds a finished run of the requested length is
// left untouched (the ablation/sweep drivers lean on this).
void do_train(const FlatConfig& cfg, const Dataset& data, bool reuse) {
    TrainConfig tc = train_config_from(cfg);
    if (tc.run_dir.empty())
        throw std::runtime_error("train: train.run_dir must not be empty");
    if (reuse && !tc.resume && run_complete(tc.run_dir, tc.epochs)) {
        std::printf("train: reusing finished run %s\n", tc.run_dir.c_str());
        return;
    }

    ModelConfig mc = model_config_from(cfg, data.cfg);
    std::string cls_path = cfg.get_str("cls.path", "runs/cls/cls.dvp");
    int cls_c1 = cfg.get_int("cls.c1", 16);
    int cls_c2 = cfg.get_int("cls.c2", 32);

    Classifier cls;
    if (tc.flags.use_e)
        cls = load_classifier(cls_path, data.cfg.s, data.cfg.h, data.cfg.w, cls_c1,
                              cls_c2, true);

    GeneratorModel model(mc, tc.seed);

    FlatConfig resolved = cfg;
    echo_resolved(resolved, cfg.get_str("data.dir", "data"), mc, tc, cls_path, cls_c1,
                  cls_c2);
    write_manifest(tc.run_dir, "train", resolved, tc.seed,
                   {"model.dvp", "opt.dvp", "state.json", "train.log.jsonl"});

    TrainResult res =
        train_generator(model, data, tc.flags.use_e ? &cls : nullptr, tc);
    if (res.epochs.empty()) {
        std::printf("train: %s already complete, nothing to do\n", tc.run_dir.c_str());
        return;
    }
    const EpochStat& last = res.epochs.back();
    std::printf("train: %s done, %lld steps, epoch %d mean loss %.4f (gen %.4f cls %.4f)\n",
                tc.run_dir.c_str(), (long long)res.steps, last.epoch, last.mean_total,
                last.mean_gen, last.mean_cls);
}

EvalOptions eval_options_from(const FlatConfig& cfg) {
    EvalOptions o;
    o.pool_size = cfg.get_int("eval.pool_size", o.pool_size);
    o.contamination = cfg.get_float("eval.contamination", o.contamination);
    o.shift = cfg.get_bool("eval.shift", o.shift);
    o.shift_gain = cfg.get_float("eval.shift_gain", o.shift_gain);
    o.shift_bias = cfg.get_float("eval.shift_bias", o.shift_bias);
    o.shift_noise = cfg.get_float("eval.shift_noise", o.shift_noise);
    o.pairing_seed = cfg.get_u64("eval.pairing_seed", o.pairing_seed);
    o.max_gen_len = cfg.get_int("eval.max_gen_len", o.max_gen_len);
    o.case_limit = cfg.get_int("eval.cases", o.case_limit);
    return o;
}

void echo_eval_options(FlatConfig& out, const EvalOptions& o) {
    out.set("eval.pool_size", std::to_string(o.pool_size));
    out.set("eval.contamination", fmt_f(o.contamination));
    out.set("eval.shift", o.shift ? "true" : "false");
    out.set("eval.shift_gain", fmt_f(o.shift_gain));
    out.set("eval.shift_bias", fmt_f(o.shift_bias));
    out.set("eval.shift_noise", fmt_f(o.shift_noise));
    out.set("eval.pairing_seed", std::to_string(o.pairing_seed));
    out.set("eval.max_gen_len", std::to_string(o.max_gen_len));
    out.set("eval.cases", std::to_string(o.case_limit));
}

struct MetricRow {
    std::string variant;
    uint64_t seed = 0;
    int key = 0; // free-form second key (prefix length, pool size, ...)
    EvalSummary s;
};

const char* kRowHeader =
    "bleu1,bleu2,bleu3,bleu4,rouge1,rouge2,rougeL,meteor,"
    "ce_precision,ce_recall,ce_f1,mean_top8_mass";

std::string row_csv(const EvalSummary& s) {
    std::ostringstream os;
    os << fmt_g(s.nlg.bleu1) << ',' << fmt_g(s.nlg.bleu2) << ',' << fmt_g(s.nlg.bleu3)
       << ',' << fmt_g(s.nlg.bleu4) << ',' << fmt_g(s.nlg.rouge1) << ','
       << fmt_g(s.nlg.rouge2) << ',' << fmt_g(s.nlg.rougeL) << ',' << fmt_g(s.nlg.meteor)
       << ',' << fmt_g(s.ce.precision) << ',' << fmt_g(s.ce.recall) << ','
       << fmt_g(s.ce.f1) << ',' << fmt_g(s.mean_top8);
    return os.str();
}

json row_json(const EvalSummary& s) {
    json j;
    j["cases"] = s.cases;
    j["nlg"] = nlg_json(s.nlg);
    j["ce"] = json{{"precision", s.ce.precision},
                   {"recall", s.ce.recall},
                   {"f1", s.ce.f1},
                   {"tp", s.counts.tp},
                   {"fp", s.counts.fp},
                   {"fn", s.counts.fn}};
    j["mean_top8_mass"] = s.mean_top8;
    j["abnormal_cases"] = s.abnormal_cases;
    return j;
}

} // namespace

const std::vector<VariantSpec>& experiment_matrix() {
    static const std::vector<VariantSpec> m = [] {
        std::vector<VariantSpec> v;
        AblationFlags f;
        // baseline: latents + instruction only
        f = AblationFlags{};
        f.use_global = f.use_local = f.use_e = f.use_prefix = false;
        v.push_back({"baseline", f});
        // + anchors, still no difference prompt
        f = AblationFlags{};
        f.use_global = f.use_local = f.use_prefix = false;
        f.use_e = true;
        v.push_back({"plus_e", f});
        // anchors + global delta only
        f = AblationFlags{};
        f.use_local = false;
        v.push_back({"global_e", f});
        // anchors + local delta only
        f = AblationFlags{};
        f.use_global = false;
        v.push_back({"local_e", f});
        // the full model
        f = AblationFlags{};
        v.push_back({"ours", f});
        // alias row for the difference-free comparison
        f = AblationFlags{};
        f.use_global = f.use_local = f.use_prefix = false;
        f.use_e = true;
        v.push_back({"wo_diff", f});
        // voxelwise subtraction behind an identically shaped prompt
        f = AblationFlags{};
        f.pixel_diff = true;
        v.push_back({"pixel_diff", f});
        return v;
    }();
    return m;
}

AblationFlags flags_for_variant(const std::string& name) {
    for (const VariantSpec& v : experiment_matrix())
        if (v.name == name) return v.flags;
    throw std::runtime_error("unknown variant: " + name);
}

EvalSummary run_eval(GeneratorModel& model, const AblationFlags& flags, const Dataset& data,
                     const Classifier* cls, const EvalOptions& opts,
                     const std::string& out_dir) {
    if (flags.use_e && cls == nullptr)
        throw std::runtime_error("run_eval: variant conditions on anchors but no classifier given");
    if (cls != nullptr)
        cls->verify_seal();
    if (opts.max_gen_len <= 0)
        throw std::runtime_error("run_eval: max_gen_len must be positive");

    ReferencePool pool = build_reference_pool(data, "test", opts.pool_size);
    if (opts.contamination > 0.0f)
        pool = contaminate_pool(pool, data, opts.contamination);
    std::set<std::string> members(pool.members.begin(), pool.members.end());

    std::vector<const CaseRecord*> cases = data.split_cases("test");
    if (opts.case_limit > 0 && (int)cases.size() > opts.case_limit)
        cases.resize(opts.case_limit);
    if (cases.empty())
        throw std::runtime_error("run_eval: empty test split");

    EvalSummary sum;
    std::vector<std::array<int, kNumClasses>> preds, golds;
    double b1 = 0, b2 = 0, b3 = 0, b4 = 0, r1 = 0, r2 = 0, rl = 0, mt = 0;
    double top8_sum = 0.0;
    int top8_n = 0;
    json per_case = json::array();
    std::ostringstream reports, diffmap;
    const std::string cls_sum = cls ? cls->weight_checksum() : "";

    NoGradGuard ng; // inference only
    for (size_t i = 0; i < cases.size(); ++i) {
        const CaseRecord& c = *cases[i];
        // per-case pairing stream: stable under case_limit truncation
        Rng pair_rng = Rng::derive(opts.pairing_seed, 0x65766c70ull, (uint64_t)i);
        const std::string& ref_id = sample_reference(pool, pair_rng);
        if (!members.count(ref_id))
            sum.refs_all_in_pool = false;
        const CaseRecord& ref = data.by_id(ref_id);
        std::vector<float> ref_vol = ref.volume;
        if (opts.shift) {
            Rng shift_rng = Rng::derive(opts.pairing_seed, 0x73686674ull, (uint64_t)i);
            ref_vol = domain_shift_transform(ref_vol, opts.shift_gain, opts.shift_bias,
                                             opts.shift_noise, shift_rng);
        }

        std::array<float, kNumClasses> probs{};
        const std::array<float, kNumClasses>* pp = nullptr;
        if (flags.use_e) {
            probs = cls->predict(c.volume);
            pp = &probs;
        }

        GeneratorModel::ForwardOut fwd = model.forward_inputs(c.volume, ref_vol, pp, flags);
        std::vector<int> ids = model.decoder.generate(fwd.x_in, opts.max_gen_len);
        metrics::Tokens cand = vocab().decode(ids);
        metrics::Tokens gold = vocab().decode(c.report);
        metrics::NlgScores s = metrics::score_pair(cand, gold);
        b1 += s.bleu1;
        b2 += s.bleu2;
        b3 += s.bleu3;
        b4 += s.bleu4;
        r1 += s.rouge1;
        r2 += s.rouge2;
        rl += s.rougeL;
        mt += s.meteor;
        preds.push_back(extract_labels(ids));
        golds.push_back(c.labels);

        double t8 = -1.0;
        if (fwd.latents_ref.defined()) {
            std::vector<float> sc =
                HybridDeltaEncoder::importance_scores(fwd.latents, fwd.latents_ref);
            t8 = metrics::top_k_mass(sc, std::min<int>(8, (int)sc.size()));
            if (!c.normal()) {
                top8_sum += t8;
                ++top8_n;
            }
            if (opts.export_diffmap) {
                Tensor w = HybridDeltaEncoder::local_weights(fwd.latents, fwd.latents_ref);
                json row = {{"case", c.id},
                            {"ref", ref_id},
                            {"abnormal", !c.normal()},
                            {"scores", json::array()},
                            {"weights", json::array()}};
                for (float v : sc) row["scores"].push_back((double)v);
                for (float v : w.values()) row["weights"].push_back((double)v);
                diffmap << row.dump() << "\n";
            }
        }

        json pc = {{"case", c.id},     {"ref", ref_id},        {"abnormal", !c.normal()},
                   {"bleu1", s.bleu1}, {"bleu4", s.bleu4},     {"rougeL", s.rougeL},
                   {"meteor", s.meteor}};
        if (t8 >= 0.0)
            pc["top8_mass"] = t8;
        per_case.push_back(std::move(pc));

        json rep = {{"case", c.id},
                    {"ref", ref_id},
                    {"tokens", ids},
                    {"text", vocab().detokenize(ids)}};
        reports << rep.dump() << "\n";
    }

    const double n = (double)cases.size();
    sum.cases = (int)cases.size();
    sum.nlg.bleu1 = b1 / n;
    sum.nlg.bleu2 = b2 / n;
    sum.nlg.bleu3 = b3 / n;
    sum.nlg.bleu4 = b4 / n;
    sum.nlg.rouge1 = r1 / n;
    sum.nlg.rouge2 = r2 / n;
    sum.nlg.rougeL = rl / n;
    sum.nlg.meteor = mt / n;
    sum.counts = metrics::ce_counts(preds, golds);
    sum.ce = metrics::ce_scores(sum.counts);
    sum.abnormal_cases = top8_n;
    sum.mean_top8 = top8_n > 0 ? top8_sum / (double)top8_n : -1.0;

    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        json doc;
        doc["cases"] = sum.cases;
        doc["pool"] = json{{"split", pool.split},
                           {"size", (int)pool.members.size()},
                           {"contamination", (double)pool.contamination_ratio},
                           {"shifted", opts.shift},
                           {"pairing_seed", opts.pairing_seed},
                           {"all_refs_in_pool", sum.refs_all_in_pool}};
        if (!cls_sum.empty())
            doc["classifier_checksum"] = cls_sum;
        doc["nlg"] = nlg_json(sum.nlg);
        doc["ce"] = json{{"precision", sum.ce.precision},
                         {"recall", sum.ce.recall},
                         {"f1", sum.ce.f1},
                         {"tp", sum.counts.tp},
                         {"fp", sum.counts.fp},
                         {"fn", sum.counts.fn}};
        if (top8_n > 0)
            doc["importance"] =
                json{{"abnormal_cases", top8_n}, {"mean_top8_mass", sum.mean_top8}};
        doc["per_case"] = std::move(per_case);
        write_text(out_dir + "/eval.json", doc.dump(2) + "\n");
        write_text(out_dir + "/reports.jsonl", reports.str());
        if (opts.export_diffmap)
            write_text(out_dir + "/diffmap.jsonl", diffmap.str());
    }
    return sum;
}

LoadedRun load_run(const std::string& run_dir, const Dataset& data) {
    json m = read_json(run_dir + "/manifest.json");
    if (!m.contains("config") || !m["config"].is_object())
        throw std::runtime_error(run_dir + "/manifest.json: missing config object");

    LoadedRun lr;
    lr.dir = run_dir;
    for (const auto& [k, v] : m["config"].items()) {
        if (!v.is_string())
            throw std::runtime_error(run_dir + "/manifest.json: config values must be strings");
        lr.cfg.set(k, v.get<std::string>());
    }
    lr.flags = flags_from(lr.cfg);

    ModelConfig mc = model_config_from(lr.cfg, data.cfg);
    uint64_t seed = lr.cfg.get_u64("train.seed", 21);
    lr.model = GeneratorModel(mc, seed);
    if (lr.cfg.get_bool("train.lora", false))
        lr.model.apply_adapters(lr.cfg.get_int("train.lora_r", 4),
                                lr.cfg.get_float("train.lora_alpha", 8.0f), seed);
    ParamMap pm = lr.model.params();
    load_checkpoint_into(run_dir + "/model.dvp", pm);

    if (lr.flags.use_e) {
        std::string cp = lr.cfg.get_str("cls.path", "");
        if (cp.empty())
            throw std::runtime_error(run_dir + ": manifest lacks cls.path but the variant uses anchors");
        lr.cls = load_classifier(cp, data.cfg.s, data.cfg.h, data.cfg.w,
                                 lr.cfg.get_int("cls.c1", 16), lr.cfg.get_int("cls.c2", 32),
                                 true);
        lr.has_cls = true;
    }
    return lr;
}

void cmd_synth(const FlatConfig& cfg) {
    SynthConfig sc = synth_config_from(cfg);
    std::string dir = cfg.get_str("data.dir", "data");
    Dataset ds = build_dataset(sc);
    save_dataset(ds, dir);

    int train_n = 0, train_normal = 0, test_n = 0, test_normal = 0;
    for (const CaseRecord& c : ds.cases) {
        if (c.split == "train") {
            ++train_n;
            train_normal += c.normal() ? 1 : 0;
        } else {
            ++test_n;
            test_normal += c.normal() ? 1 : 0;
        }
    }
    write_manifest(dir, "synth", cfg, sc.seed,
                   {"meta.json", "cases.jsonl", "volumes.bin", "pool_train.json",
                    "pool_test.json"});
    std::printf("synth: %d train (%d normal), %d test (%d normal) -> %s\n", train_n,
                train_normal, test_n, test_normal, dir.c_str());
}

void cmd_train_classifier(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    ClassifierTrainConfig cc;
    cc.c1 = cfg.get_int("cls.c1", cc.c1);
    cc.c2 = cfg.get_int("cls.c2", cc.c2);
    cc.epochs = cfg.get_int("cls.epochs", cc.epochs);
    cc.lr = cfg.get_float("cls.lr", cc.lr);
    cc.seed = cfg.get_u64("cls.seed", cc.seed);

    Classifier cls(data.cfg.s, data.cfg.h, data.cfg.w, cc.c1, cc.c2, cc.seed);
    ClassifierTrainStats st = train_classifier(cls, data, cc);
    cls.seal();

    std::string out = cfg.get_str("cls.out", "runs/cls");
    ensure_dir(out);
    save_classifier(out + "/cls.dvp", cls);
    write_manifest(out, "train-classifier", cfg, cc.seed, {"cls.dvp"});
    std::printf("classifier: %lld steps, epoch loss %.4f -> %.4f, checksum %s -> %s/cls.dvp\n",
                (long long)st.steps, st.first_epoch_loss, st.last_epoch_loss,
                cls.weight_checksum().c_str(), out.c_str());
}

void cmd_train(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    do_train(cfg, data, /*reuse=*/false);
}

void cmd_eval(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    std::string run = cfg.get_str("eval.run", "runs/run");
    LoadedRun lr = load_run(run, data);
    EvalOptions opts = eval_options_from(cfg);
    std::string tag = cfg.get_str("eval.tag", "default");
    std::string out_dir = run + "/eval/" + tag;

    EvalSummary s =
        run_eval(lr.model, lr.flags, data, lr.has_cls ? &lr.cls : nullptr, opts, out_dir);

    FlatConfig resolved = cfg;
    echo_eval_options(resolved, opts);
    resolved.set("eval.run", run);
    resolved.set("eval.tag", tag);
    write_manifest(out_dir, "eval", resolved, opts.pairing_seed,
                   {"eval.json", "reports.jsonl"});
    std::printf("eval: %d cases bleu1 %.2f rougeL %.2f ce_f1 %.4f top8 %.4f -> %s\n",
                s.cases, s.nlg.bleu1, s.nlg.rougeL, s.ce.f1, s.mean_top8, out_dir.c_str());
}

void cmd_ablate(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    std::string out = cfg.get_str("ablate.out", "runs/ablate");
    std::vector<std::string> variants =
        split_list(cfg.get_str("ablate.variants", "baseline,plus_e,global_e,local_e,ours"));
    std::vector<uint64_t> seeds = split_u64_list(cfg.get_str("ablate.seeds", "21,22,23"));
    if (variants.empty() || seeds.empty())
        throw std::runtime_error("ablate: needs at least one variant and one seed");
    for (const std::string& v : variants)
        flags_for_variant(v); // validate names up front

    EvalOptions opts = eval_options_from(cfg);
    std::vector<MetricRow> rows;
    for (const std::string& v : variants) {
        for (uint64_t seed : seeds) {
            std::string run_dir = out + "/" + v + "_s" + std::to_string(seed);
            FlatConfig rc = cfg;
            rc.set("train.variant", v);
            rc.set("train.seed", std::to_string(seed));
            rc.set("train.run_dir", run_dir);
            do_train(rc, data, /*reuse=*/true);

            LoadedRun lr = load_run(run_dir, data);
            EvalSummary s = run_eval(lr.model, lr.flags, data,
                                     lr.has_cls ? &lr.cls : nullptr, opts,
                                     run_dir + "/eval/default");
            FlatConfig ecfg = rc;
            echo_eval_options(ecfg, opts);
            write_manifest(run_dir + "/eval/default", "ablate-eval", ecfg,
                           opts.pairing_seed, {"eval.json", "reports.jsonl"});
            rows.push_back({v, seed, 0, s});
            std::printf("ablate: %s seed %llu bleu1 %.2f ce_f1 %.4f top8 %.4f\n", v.c_str(),
                        (unsigned long long)seed, s.nlg.bleu1, s.ce.f1, s.mean_top8);
        }
    }

    std::ostringstream csv;
    csv << "variant,seed," << kRowHeader << "\n";
    json jrows = json::array();
    for (const MetricRow& r : rows) {
        csv << r.variant << ',' << r.seed << ',' << row_csv(r.s) << "\n";
        json j = row_json(r.s);
        j["variant"] = r.variant;
        j["seed"] = r.seed;
        jrows.push_back(std::move(j));
    }
    json agg = json::object();
    for (const std::string& v : variants) {
        double f1 = 0, bl = 0, t8 = 0;
        int cnt = 0;
        for (const MetricRow& r : rows)
            if (r.variant == v) {
                f1 += r.s.ce.f1;
                bl += r.s.nlg.bleu1;
                t8 += r.s.mean_top8;
                ++cnt;
            }
        agg[v] = json{{"mean_ce_f1", f1 / cnt},
                      {"mean_bleu1", bl / cnt},
                      {"mean_top8_mass", t8 / cnt}};
    }
    json doc = {{"rows", std::move(jrows)}, {"aggregate", std::move(agg)}};
    ensure_dir(out);
    write_text(out + "/ablate.csv", csv.str());
    write_text(out + "/ablate.json", doc.dump(2) + "\n");
    write_manifest(out, "ablate", cfg, seeds[0], {"ablate.csv", "ablate.json"});
    std::printf("ablate: wrote %s/ablate.csv (%zu rows)\n", out.c_str(), rows.size());
}

void cmd_sweep_prefix(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    std::string out = cfg.get_str("sweep.out", "runs/sweep");
    std::vector<int> plist = split_int_list(cfg.get_str("sweep.p_list", "4,8,16,24,32"));
    if (plist.empty())
        throw std::runtime_error("sweep-prefix: empty p list");

    EvalOptions opts = eval_options_from(cfg);
    std::vector<MetricRow> rows;
    for (int p : plist) {
        if (p <= 0)
            throw std::runtime_error("sweep-prefix: prefix length must be positive");
        std::string run_dir = out + "/p" + std::to_string(p);
        FlatConfig rc = cfg;
        rc.set("model.prefix_len", std::to_string(p));
        rc.set("train.run_dir", run_dir);
        do_train(rc, data, /*reuse=*/true);

        LoadedRun lr = load_run(run_dir, data);
        EvalSummary s = run_eval(lr.model, lr.flags, data, lr.has_cls ? &lr.cls : nullptr,
                                 opts, run_dir + "/eval/default");
        FlatConfig ecfg = rc;
        echo_eval_options(ecfg, opts);
        write_manifest(run_dir + "/eval/default", "sweep-eval", ecfg, opts.pairing_seed,
                       {"eval.json", "reports.jsonl"});
        rows.push_back({"ours", 0, p, s});
        std::printf("sweep-prefix: p=%d bleu1 %.2f ce_f1 %.4f\n", p, s.nlg.bleu1, s.ce.f1);
    }

    std::ostringstream csv;
    csv << "prefix_len," << kRowHeader << "\n";
    json jrows = json::array();
    for (const MetricRow& r : rows) {
        csv << r.key << ',' << row_csv(r.s) << "\n";
        json j = row_json(r.s);
        j["prefix_len"] = r.key;
        jrows.push_back(std::move(j));
    }
    ensure_dir(out);
    write_text(out + "/sweep.csv", csv.str());
    write_text(out + "/sweep.json", json{{"rows", std::move(jrows)}}.dump(2) + "\n");
    write_manifest(out, "sweep-prefix", cfg, cfg.get_u64("train.seed", 21),
                   {"sweep.csv", "sweep.json"});
    std::printf("sweep-prefix: wrote %s/sweep.csv (%zu rows)\n", out.c_str(), rows.size());
}

void cmd_seeds(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    std::string ours_run = cfg.get_str("seeds.ours_run", "");
    std::string base_run = cfg.get_str("seeds.baseline_run", "");
    if (ours_run.empty() || base_run.empty())
        throw std::runtime_error("seeds: set seeds.ours_run and seeds.baseline_run");
    std::vector<uint64_t> list = split_u64_list(cfg.get_str("seeds.list", "21,22,23,24,25"));
    if (list.size() < 2)
        throw std::runtime_error("seeds: need at least two pairing seeds");
    std::string out = cfg.get_str("seeds.out", "runs/seeds");

    struct Arm {
        std::string name;
        LoadedRun run;
        std::vector<EvalSummary> sums;
    };
    std::vector<Arm> arms;
    arms.push_back({"ours", load_run(ours_run, data), {}});
    arms.push_back({"baseline", load_run(base_run, data), {}});

    EvalOptions base_opts = eval_options_from(cfg);
    std::ostringstream csv;
    csv << "variant,pairing_seed," << kRowHeader << "\n";
    json jrows = json::array();
    for (Arm& arm : arms) {
        for (uint64_t ps : list) {
            EvalOptions opts = base_opts;
            opts.pairing_seed = ps;
            std::string dir = out + "/" + arm.name + "_pair" + std::to_string(ps);
            EvalSummary s = run_eval(arm.run.model, arm.run.flags, data,
                                     arm.run.has_cls ? &arm.run.cls : nullptr, opts, dir);
            FlatConfig ecfg = cfg;
            echo_eval_options(ecfg, opts);
            write_manifest(dir, "seeds-eval", ecfg, ps, {"eval.json", "reports.jsonl"});
            arm.sums.push_back(s);
            csv << arm.name << ',' << ps << ',' << row_csv(s) << "\n";
            json j = row_json(s);
            j["variant"] = arm.name;
            j["pairing_seed"] = ps;
            jrows.push_back(std::move(j));
            std::printf("seeds: %s pairing %llu bleu1 %.2f ce_f1 %.4f\n", arm.name.c_str(),
                        (unsigned long long)ps, s.nlg.bleu1, s.ce.f1);
        }
    }

    // Welch's test per metric, ours vs baseline across pairing seeds.
    auto column = [](const std::vector<EvalSummary>& v, int m) {
        std::vector<double> x;
        for (const EvalSummary& s : v) {
            switch (m) {
                case 0: x.push_back(s.nlg.bleu1); break;
                case 1: x.push_back(s.nlg.bleu4); break;
                case 2: x.push_back(s.nlg.rougeL); break;
                case 3: x.push_back(s.nlg.meteor); break;
                default: x.push_back(s.ce.f1); break;
            }
        }
        return x;
    };
    static const char* kMetricNames[] = {"bleu1", "bleu4", "rougeL", "meteor", "ce_f1"};
    json welch = json::object();
    for (int m = 0; m < 5; ++m) {
        std::vector<double> a = column(arms[0].sums, m);
        std::vector<double> b = column(arms[1].sums, m);
        try {
            stats::WelchResult r = stats::welch_t_test(a, b);
            welch[kMetricNames[m]] = json{{"t", r.t}, {"dof", r.dof}, {"p", r.p}};
        } catch (const std::exception& e) {
            welch[kMetricNames[m]] = json{{"error", e.what()}};
        }
    }
    json doc = {{"rows", std::move(jrows)}, {"welch", std::move(welch)}};
    ensure_dir(out);
    write_text(out + "/seeds.csv", csv.str());
    write_text(out + "/seeds.json", doc.dump(2) + "\n");
    write_manifest(out, "seeds", cfg, list[0], {"seeds.csv", "seeds.json"});
    std::printf("seeds: wrote %s/seeds.csv (%zu rows)\n", out.c_str(),
                arms[0].sums.size() + arms[1].sums.size());
}

void cmd_pool_study(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    std::string run = cfg.get_str("pool.run", "runs/run");
    LoadedRun lr = load_run(run, data);
    std::string out = cfg.get_str("pool.out", run + "/pool_study");
    std::vector<int> sizes = split_int_list(cfg.get_str("pool.sizes", "1,10,0"));
    std::vector<double> contams = split_double_list(cfg.get_str("pool.contaminations", ""));
    bool shift = cfg.get_bool("pool.shift", false);
    if (sizes.empty() && contams.empty() && !shift)
        throw std::runtime_error("pool-study: nothing to do");

    EvalOptions base_opts = eval_options_from(cfg);
    struct Cond {
        std::string label;
        EvalOptions opts;
    };
    std::vector<Cond> conds;
    for (int sz : sizes) {
        EvalOptions o = base_opts;
        o.pool_size = sz;
        conds.push_back({sz > 0 ? "size" + std::to_string(sz) : "size_full", o});
    }
    for (double c : contams) {
        EvalOptions o = base_opts;
        o.contamination = (float)c;
        conds.push_back({"contam" + std::to_string((int)std::lround(c * 100.0)), o});
    }
    if (shift) {
        EvalOptions o = base_opts;
        o.shift = true;
        conds.push_back({"shifted", o});
    }

    std::ostringstream csv;
    csv << "condition,pool_size,contamination,shifted," << kRowHeader << "\n";
    json jrows = json::array();
    std::vector<double> size_bleu1;
    for (const Cond& c : conds) {
        EvalSummary s = run_eval(lr.model, lr.flags, data, lr.has_cls ? &lr.cls : nullptr,
                                 c.opts, out + "/" + c.label);
        FlatConfig ecfg = cfg;
        echo_eval_options(ecfg, c.opts);
        write_manifest(out + "/" + c.label, "pool-eval", ecfg, c.opts.pairing_seed,
                       {"eval.json", "reports.jsonl"});
        csv << c.label << ',' << c.opts.pool_size << ',' << fmt_g(c.opts.contamination)
            << ',' << (c.opts.shift ? "true" : "false") << ',' << row_csv(s) << "\n";
        json j = row_json(s);
        j["condition"] = c.label;
        j["pool_size"] = c.opts.pool_size;
        j["contamination"] = (double)c.opts.contamination;
        j["shifted"] = c.opts.shift;
        jrows.push_back(std::move(j));
        if (c.label.rfind("size", 0) == 0)
            size_bleu1.push_back(s.nlg.bleu1);
        std::printf("pool-study: %s bleu1 %.2f ce_f1 %.4f\n", c.label.c_str(), s.nlg.bleu1,
                    s.ce.f1);
    }

    json doc = {{"rows", std::move(jrows)}};
    if (size_bleu1.size() >= 2) {
        double lo = *std::min_element(size_bleu1.begin(), size_bleu1.end());
        double hi = *std::max_element(size_bleu1.begin(), size_bleu1.end());
        doc["bleu1_spread_sizes"] = hi - lo;
    }
    ensure_dir(out);
    write_text(out + "/pool_study.csv", csv.str());
    write_text(out + "/pool_study.json", doc.dump(2) + "\n");
    write_manifest(out, "pool-study", cfg, base_opts.pairing_seed,
                   {"pool_study.csv", "pool_study.json"});
    std::printf("pool-study: wrote %s/pool_study.csv (%zu rows)\n", out.c_str(),
                conds.size());
}

void cmd_diffmap(const FlatConfig& cfg) {
    Dataset data = load_dataset(cfg.get_str("data.dir", "data"));
    std::string run = cfg.get_str("diffmap.run", "runs/run");
    std::string ablated = cfg.get_str("diffmap.ablated_run", "");
    std::string out = cfg.get_str("diffmap.out", run + "/diffmap");

    EvalOptions opts = eval_options_from(cfg);
    opts.export_diffmap = true;

    LoadedRun full = load_run(run, data);
    if (full.flags.pixel_diff)
        throw std::runtime_error("diffmap: the pixel_diff variant has no latent importance scores");
    EvalSummary fs = run_eval(full.model, full.flags, data,
                              full.has_cls ? &full.cls : nullptr, opts, out + "/full");
    FlatConfig fcfg = cfg;
    echo_eval_options(fcfg, opts);
    write_manifest(out + "/full", "diffmap-eval", fcfg, opts.pairing_seed,
                   {"eval.json", "reports.jsonl", "diffmap.jsonl"});

    json doc;
    doc["uniform_mass"] = 8.0 / 32.0;
    doc["full"] = json{{"mean_top8_mass", fs.mean_top8}, {"abnormal_cases", fs.abnormal_cases}};
    if (!ablated.empty()) {
        LoadedRun abl = load_run(ablated, data);
        if (abl.flags.pixel_diff)
            throw std::runtime_error("diffmap: ablated run must keep latent references");
        EvalSummary as = run_eval(abl.model, abl.flags, data,
                                  abl.has_cls ? &abl.cls : nullptr, opts, out + "/ablated");
        write_manifest(out + "/ablated", "diffmap-eval", fcfg, opts.pairing_seed,
                       {"eval.json", "reports.jsonl", "diffmap.jsonl"});
        doc["ablated"] =
            json{{"mean_top8_mass", as.mean_top8}, {"abnormal_cases", as.abnormal_cases}};
    }
    ensure_dir(out);
    write_text(out + "/diffmap_summary.json", doc.dump(2) + "\n");
    write_manifest(out, "diffmap", cfg, opts.pairing_seed, {"diffmap_summary.json"});
    std::printf("diffmap: full top8 %.4f%s -> %s\n", fs.mean_top8,
                ablated.empty() ? "" : " (+ablated)", out.c_str());
}

} // namespace dvp
