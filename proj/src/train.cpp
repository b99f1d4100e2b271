// SPDX-License-Identifier: Apache-2.0
#include "dvp/train.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dvp {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

StepLoss train_step(GeneratorModel& model, const Classifier* cls, const CaseRecord& target,
                    const ReferencePool& pool, const Dataset& data, Rng& pair_rng,
                    const AblationFlags& flags, Adam& opt) {
    if (target.split != pool.split)
        throw std::runtime_error("train step: case " + target.id + " is in split '" +
                                 target.split + "' but the pool holds '" + pool.split + "'");
    const std::string& ref_id = sample_reference(pool, pair_rng);
    const CaseRecord& ref = data.by_id(ref_id);
    if (ref.split != target.split)
        throw std::runtime_error("train step: reference " + ref_id + " crosses splits");

    std::array<float, kNumClasses> probs{};
    const std::array<float, kNumClasses>* pp = nullptr;
    if (flags.use_e) {
        if (!cls) throw std::runtime_error("train step: anchor text needs a classifier");
        probs = cls->predict(target.volume);
        pp = &probs;
    }

    opt.zero_grad();
    auto fwd = model.forward_inputs(target.volume, ref.volume, pp, flags);
    std::vector<int> targets = target.report;
    targets.push_back(Vocabulary::eos_id);
    Tensor logits = model.decoder.report_logits(fwd.x_in, targets);
    Tensor l_gen = nll_loss(logits, targets, Vocabulary::pad_id);

    std::vector<float> yv(target.labels.begin(), target.labels.end());
    Tensor y = Tensor::from_data({1, kNumClasses}, yv);
    Tensor l_cls = bce_with_logits(model.aux_logits(fwd.latents), y);
    Tensor l_total = ops::add(l_gen, l_cls);
    backward(l_total);
    opt.step();

    StepLoss out;
    out.l_gen = l_gen.item();
    out.l_cls = l_cls.item();
    out.l_total = l_total.item();
    out.ref_id = ref_id;
    return out;
}

static void fisher_yates(std::vector<size_t>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(i)]);
}

TrainResult train_generator(GeneratorModel& model, const Dataset& data, const Classifier* cls,
                            const TrainConfig& cfg) {
    if (cfg.batch_size != 1)
        throw std::runtime_error("trainer: batch size " + std::to_string(cfg.batch_size) +
                                 " unsupported; the loop is defined for batch size 1");
    if (cfg.flags.use_e) {
        if (!cls) throw std::runtime_error("trainer: use_e requires a classifier");
        if (!cls->sealed)
            throw std::runtime_error("trainer: the anchor classifier must be sealed first");
    }
    if (cfg.lora) model.apply_adapters(cfg.lora_r, cfg.lora_alpha, cfg.seed);
    ParamMap params = model.params();
    Adam opt(params, {cfg.lr, 0.9f, 0.999f, 1e-8f, cfg.clip_norm});

    ReferencePool pool = build_reference_pool(data, "train", cfg.pool_max);
    for (const auto& id : pool.members) {
        const CaseRecord& m = data.by_id(id);
        if (!m.normal() || m.split != "train")
            throw std::runtime_error("trainer: pool audit failed for member " + id);
    }

    std::vector<size_t> train_idx;
    for (size_t i = 0; i < data.cases.size(); ++i)
        if (data.cases[i].split == "train") train_idx.push_back(i);
    if (train_idx.empty()) throw std::runtime_error("trainer: no train cases");

    TrainResult res;
    res.cls_checksum_before = cls ? cls->weight_checksum() : "";

    int start_epoch = 0;
    int64_t step = 0;
    std::ofstream log;
    const bool persist = !cfg.run_dir.empty();
    const fs::path dir(cfg.run_dir);
    const fs::path model_p = dir / "model.dvp";
    const fs::path opt_p = dir / "opt.dvp";
    const fs::path state_p = dir / "state.json";
    if (persist) {
        fs::create_directories(dir);
        if (cfg.resume && fs::exists(state_p)) {
            std::ifstream sf(state_p);
            json st = json::parse(sf);
            start_epoch = st.at("completed_epochs").get<int>();
            step = st.at("steps").get<int64_t>();
            load_checkpoint_into(model_p.string(), params);
            ParamMap opt_state = load_checkpoint(opt_p.string());
            opt.import_state(opt_state);
            log.open(dir / "train.log.jsonl", std::ios::app);
        } else {
            log.open(dir / "train.log.jsonl", std::ios::trunc);
        }
        if (!log) throw std::runtime_error("trainer: cannot open train.log.jsonl under " +
                                           cfg.run_dir);
    }

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order = train_idx;
        Rng shuffle_rng = Rng::derive(cfg.seed, 0x73687566, (uint64_t)epoch); // "shuf"
        fisher_yates(order, shuffle_rng);
        Rng pair_rng = Rng::derive(cfg.seed, 0x70616972, (uint64_t)epoch); // "pair"

        EpochStat es;
        es.epoch = epoch;
        double sg = 0.0, sc = 0.0, st = 0.0;
        for (size_t idx : order) {
            const CaseRecord& target = data.cases[idx];
            StepLoss sl = train_step(model, cls, target, pool, data, pair_rng, cfg.flags, opt);
            ++step;
            ++es.steps;
            sg += sl.l_gen;
            sc += sl.l_cls;
            st += sl.l_total;
            if (persist) {
                json row = {{"step", step},       {"epoch", epoch},     {"case", target.id},
                            {"ref", sl.ref_id},   {"l_gen", sl.l_gen},  {"l_cls", sl.l_cls},
                            {"l_total", sl.l_total}};
                log << row.dump() << "\n";
            }
        }
        es.mean_gen = sg / (double)es.steps;
        es.mean_cls = sc / (double)es.steps;
        es.mean_total = st / (double)es.steps;
        res.epochs.push_back(es);

        if (cls && cls->weight_checksum() != res.cls_checksum_before)
            throw std::runtime_error("trainer: classifier weights changed during epoch " +
                                     std::to_string(epoch));
        if (persist) {
            json erow = {{"epoch", epoch},
                         {"steps", es.steps},
                         {"mean_l_gen", es.mean_gen},
                         {"mean_l_cls", es.mean_cls},
                         {"mean_l_total", es.mean_total}};
            log << erow.dump() << "\n";
            log.flush();
            save_checkpoint(model_p.string(), params);
            if (cfg.epoch_checkpoints) {
                char name[32];
                std::snprintf(name, sizeof name, "model_epoch%02d.dvp", epoch);
                save_checkpoint((dir / name).string(), params);
            }
            save_checkpoint(opt_p.string(), opt.export_state());
            json st_j = {{"completed_epochs", epoch + 1}, {"steps", step}};
            std::ofstream sf(state_p, std::ios::trunc);
            sf << st_j.dump(2) << "\n";
        }
    }

    res.steps = step;
    res.cls_checksum_after = cls ? cls->weight_checksum() : "";
    if (persist) res.model_path = model_p.string();
    return res;
}

} // namespace dvp
