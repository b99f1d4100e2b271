// SPDX-License-Identifier: Apache-2.0
//
// Command line front end. Every subcommand reads one FlatConfig assembled
// from, in precedence order: --preset, --config file, --set overrides,
// then the typed convenience flags below (which are just spelled-out
// overrides). The heavy lifting lives in experiments.cpp.
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dvp/config.hpp"
#include "dvp/experiments.hpp"
#include "dvp/kernels.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--preset", args.preset, "named defaults: desk | full");
    cmd->add_option("--set", args.sets, "override key=value (repeatable)");
}

dvp::FlatConfig resolve(const CommonArgs& args,
                        const std::vector<std::pair<std::string, std::string>>& extra) {
    dvp::FlatConfig cfg;
    if (!args.preset.empty())
        dvp::apply_preset(cfg, args.preset);
    if (!args.config_path.empty())
        cfg.merge_file(args.config_path);
    for (const std::string& kv : args.sets)
        cfg.apply_override(kv);
    for (const auto& [k, v] : extra)
        cfg.set(k, v);
    return cfg;
}

// collects "key value" pairs only for flags the user actually passed
struct Conveniences {
    std::vector<std::pair<std::string, std::string>> kv;

    void opt_str(CLI::App* cmd, const char* flag, const char* key, const char* help) {
        cmd->add_option_function<std::string>(
               flag, [this, key](const std::string& s) { kv.emplace_back(key, s); }, help)
            ->type_name("TEXT");
    }
    void opt_flag(CLI::App* cmd, const char* flag, const char* key, const char* help) {
        cmd->add_flag_callback(
            flag, [this, key]() { kv.emplace_back(key, "true"); }, help);
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"difference-prompted report generation: synthetic data, training, evaluation"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (0: library default)");

    struct Cmd {
        CLI::App* cli = nullptr;
        CommonArgs common;
        Conveniences conv;
        void (*fn)(const dvp::FlatConfig&) = nullptr;
    };
    std::vector<Cmd> cmds(9);

    auto make = [&](size_t i, const char* name, const char* help,
                    void (*fn)(const dvp::FlatConfig&)) {
        cmds[i].cli = app.add_subcommand(name, help);
        cmds[i].fn = fn;
        add_common(cmds[i].cli, cmds[i].common);
        return &cmds[i];
    };

    Cmd* synth = make(0, "synth", "generate the synthetic dataset", dvp::cmd_synth);
    synth->conv.opt_str(synth->cli, "--out", "data.dir", "dataset directory");
    synth->conv.opt_str(synth->cli, "--n-train", "data.n_train", "train cases");
    synth->conv.opt_str(synth->cli, "--n-test", "data.n_test", "test cases");
    synth->conv.opt_str(synth->cli, "--seed", "data.seed", "dataset seed");

    Cmd* tcls = make(1, "train-classifier", "train and seal the anchor classifier",
                     dvp::cmd_train_classifier);
    tcls->conv.opt_str(tcls->cli, "--data", "data.dir", "dataset directory");
    tcls->conv.opt_str(tcls->cli, "--out", "cls.out", "output directory");
    tcls->conv.opt_str(tcls->cli, "--epochs", "cls.epochs", "training epochs");
    tcls->conv.opt_str(tcls->cli, "--seed", "cls.seed", "init/shuffle seed");

    Cmd* train = make(2, "train", "train one report generator run", dvp::cmd_train);
    train->conv.opt_str(train->cli, "--data", "data.dir", "dataset directory");
    train->conv.opt_str(train->cli, "--run", "train.run_dir", "run directory");
    train->conv.opt_str(train->cli, "--variant", "train.variant",
                        "baseline|plus_e|global_e|local_e|ours|wo_diff|pixel_diff");
    train->conv.opt_str(train->cli, "--seed", "train.seed", "training seed");
    train->conv.opt_str(train->cli, "--epochs", "train.epochs", "training epochs");
    train->conv.opt_str(train->cli, "--lr", "train.lr", "learning rate");
    train->conv.opt_str(train->cli, "--classifier", "cls.path", "sealed classifier weights");
    train->conv.opt_flag(train->cli, "--resume", "train.resume", "resume from run dir");
    train->conv.opt_flag(train->cli, "--lora", "train.lora", "train low-rank adapters");

    Cmd* ev = make(3, "eval", "generate and score test reports for a run", dvp::cmd_eval);
    ev->conv.opt_str(ev->cli, "--data", "data.dir", "dataset directory");
    ev->conv.opt_str(ev->cli, "--run", "eval.run", "trained run directory");
    ev->conv.opt_str(ev->cli, "--tag", "eval.tag", "eval output tag");
    ev->conv.opt_str(ev->cli, "--pool-size", "eval.pool_size", "reference pool cap (0: all)");
    ev->conv.opt_str(ev->cli, "--contamination", "eval.contamination",
                     "abnormal fraction injected into the pool");
    ev->conv.opt_str(ev->cli, "--pairing-seed", "eval.pairing_seed", "case->reference seed");
    ev->conv.opt_str(ev->cli, "--max-gen-len", "eval.max_gen_len", "generation cap");
    ev->conv.opt_str(ev->cli, "--cases", "eval.cases", "limit scored cases (0: all)");
    ev->conv.opt_flag(ev->cli, "--shift", "eval.shift", "domain-shift the references");

    Cmd* ab = make(4, "ablate", "train + evaluate the variant matrix", dvp::cmd_ablate);
    ab->conv.opt_str(ab->cli, "--data", "data.dir", "dataset directory");
    ab->conv.opt_str(ab->cli, "--out", "ablate.out", "output directory");
    ab->conv.opt_str(ab->cli, "--variants", "ablate.variants", "comma list of variants");
    ab->conv.opt_str(ab->cli, "--seeds", "ablate.seeds", "comma list of training seeds");

    Cmd* sw = make(5, "sweep-prefix", "prefix-length sensitivity sweep", dvp::cmd_sweep_prefix);
    sw->conv.opt_str(sw->cli, "--data", "data.dir", "dataset directory");
    sw->conv.opt_str(sw->cli, "--out", "sweep.out", "output directory");
    sw->conv.opt_str(sw->cli, "--p-list", "sweep.p_list", "comma list of prefix lengths");

    Cmd* sd = make(6, "seeds", "pairing-seed stability + significance", dvp::cmd_seeds);
    sd->conv.opt_str(sd->cli, "--data", "data.dir", "dataset directory");
    sd->conv.opt_str(sd->cli, "--ours", "seeds.ours_run", "full-model run directory");
    sd->conv.opt_str(sd->cli, "--baseline", "seeds.baseline_run", "baseline run directory");
    sd->conv.opt_str(sd->cli, "--list", "seeds.list", "comma list of pairing seeds");
    sd->conv.opt_str(sd->cli, "--out", "seeds.out", "output directory");

    Cmd* ps = make(7, "pool-study", "reference-pool robustness study", dvp::cmd_pool_study);
    ps->conv.opt_str(ps->cli, "--data", "data.dir", "dataset directory");
    ps->conv.opt_str(ps->cli, "--run", "pool.run", "trained run directory");
    ps->conv.opt_str(ps->cli, "--sizes", "pool.sizes", "comma list of pool sizes (0: full)");
    ps->conv.opt_str(ps->cli, "--contaminations", "pool.contaminations",
                     "comma list of contamination ratios");
    ps->conv.opt_str(ps->cli, "--out", "pool.out", "output directory");
    ps->conv.opt_flag(ps->cli, "--shift", "pool.shift", "add a domain-shifted condition");

    Cmd* dm = make(8, "diffmap", "export latent importance maps", dvp::cmd_diffmap);
    dm->conv.opt_str(dm->cli, "--data", "data.dir", "dataset directory");
    dm->conv.opt_str(dm->cli, "--run", "diffmap.run", "full-model run directory");
    dm->conv.opt_str(dm->cli, "--ablated", "diffmap.ablated_run",
                     "prefix-ablated run directory (optional)");
    dm->conv.opt_str(dm->cli, "--cases", "eval.cases", "limit exported cases (0: all)");
    dm->conv.opt_str(dm->cli, "--out", "diffmap.out", "output directory");

    CLI11_PARSE(app, argc, argv);

    if (threads > 0)
        dvp::kernels::set_threads(threads);

    try {
        for (Cmd& c : cmds) {
            if (c.cli->parsed()) {
                c.fn(resolve(c.common, c.conv.kv));
                return 0;
            }
        }
        std::fprintf(stderr, "error: no subcommand\n");
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
