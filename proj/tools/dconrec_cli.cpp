// Command-line front end: split / augment / condense / train-eval / sweep.
// Every command is deterministic given its flags; each output directory gets
// a run_config.json with the resolved configuration for provenance.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dconrec/dconrec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dconrec;

namespace {

struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_exists(const std::string& path) {
  if (!fs::exists(path)) throw UsageFailure("input file not found: " + path);
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

std::vector<int> parse_ints(const std::string& csv) {
  std::vector<int> out;
  for (double v : parse_doubles(csv)) out.push_back(static_cast<int>(v));
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoull(tok));
  }
  return out;
}

Format format_for(const std::string& fmt, const std::string& path) {
  if (fmt == "tsv") return Format::tsv;
  if (fmt == "csv") return Format::csv;
  return path.size() > 4 && path.substr(path.size() - 4) == ".csv" ? Format::csv
                                                                   : Format::tsv;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Loads internal-id interaction files into one shared id space.
std::vector<InteractionSet> load_unified(const std::vector<std::string>& paths) {
  std::vector<InteractionSet> sets;
  int nu = 0, ni = 0;
  for (const auto& p : paths) {
    require_exists(p);
    sets.push_back(load_internal(p));
    nu = std::max(nu, sets.back().n_users());
    ni = std::max(ni, sets.back().n_items());
  }
  for (auto& s : sets) {
    auto pairs = s.pairs();
    s = InteractionSet::from_pairs(nu, ni, std::move(pairs));
  }
  return sets;
}

// ---------------------------------------------------------------------------
// shared option bundles

struct TrainFlags {
  std::string arch = "mf";
  int layers = 2;
  int dim = 64;
  double lr = 0.01;
  std::string optimizer = "adam";
  double l2 = 1e-4;
  int batch = 1024;
  int epochs = 200;
  int patience = 20;
  int negatives = 1;

  TrainConfig to_config(std::uint64_t seed) const {
    TrainConfig c;
    c.arch = arch_from_name(arch);
    c.n_layers = layers;
    c.embedding_dim = dim;
    c.learning_rate = lr;
    c.optimizer = optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
    c.l2_reg = l2;
    c.batch_size = batch;
    c.max_epochs = epochs;
    c.early_stop_patience = patience;
    c.negatives_per_positive = negatives;
    c.seed = seed;
    return c;
  }

  json to_json() const {
    return {{"arch", arch},   {"layers", layers},   {"dim", dim},
            {"lr", lr},       {"optimizer", optimizer}, {"l2", l2},
            {"batch", batch}, {"epochs", epochs},   {"patience", patience},
            {"negatives", negatives}};
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, const std::string& prefix = "") {
  const auto p = [&](const std::string& name) { return "--" + prefix + name; };
  cmd->add_option(p("arch"), f.arch)->check(CLI::IsMember({"mf", "lightgcn"}));
  cmd->add_option(p("layers"), f.layers);
  cmd->add_option(p("dim"), f.dim);
  cmd->add_option(p("lr"), f.lr);
  cmd->add_option(p("optimizer"), f.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
  cmd->add_option(p("l2"), f.l2);
  cmd->add_option(p("batch"), f.batch);
  cmd->add_option(p("epochs"), f.epochs);
  cmd->add_option(p("patience"), f.patience);
  cmd->add_option(p("negatives"), f.negatives);
}

struct CondenseFlags {
  std::string method = "dconrec";
  double ratio = 0.25;
  double r_ps = 0.3;
  int fixed_k = -1;
  int outer_epochs = 400;
  double eta = 0.01;
  double lr_decay_factor = 10.0;
  int lr_decay_every = 100;
  double lr_floor = 1e-4;
  double inner_lr = 0.1;
  int val_batch = 4096;
  std::string init_scheme = "uniform";
  bool baseline = false;
  int mask_samples = 1;
  bool warm_start = false;
  std::string finalize = "topk";
  // baseline methods
  std::string svp_direction = "hardest";
  std::string gm_distance = "cosine";
  int gm_epochs = 100;
  double gm_lr = 0.01;
  int gm_batch = 4096;
  bool gm_from_pool = false;

  CondenseConfig to_config(std::uint64_t seed) const {
    CondenseConfig c;
    c.ratio_r = ratio;
    c.outer_epochs = outer_epochs;
    c.outer_lr = eta;
    c.lr_decay_factor = lr_decay_factor;
    c.lr_decay_every = lr_decay_every;
    c.lr_floor = lr_floor;
    c.inner_lr = inner_lr;
    c.val_batch_size = val_batch;
    c.init_scheme = init_scheme == "origin-weighted" ? InitScheme::origin_weighted
                                                     : InitScheme::uniform_budget;
    c.baseline_subtraction = baseline;
    c.mask_samples = mask_samples;
    c.warm_start = warm_start;
    c.seed = seed;
    return c;
  }

  BaselineConfig to_baseline_config(std::uint64_t seed) const {
    BaselineConfig c;
    c.method = method == "random"     ? BaselineMethod::random
               : method == "majority" ? BaselineMethod::majority
               : method == "svp_cf"   ? BaselineMethod::svp_cf
                                      : BaselineMethod::gradmatch;
    c.ratio_r = ratio;
    c.seed = seed;
    c.svp_direction = svp_direction == "easiest" ? SvpDirection::easiest
                                                 : SvpDirection::hardest;
    c.gm_distance = gm_distance == "euclidean" ? GmDistance::euclidean
                                               : GmDistance::cosine_per_matrix;
    c.gm_outer_epochs = gm_epochs;
    c.gm_lr = gm_lr;
    c.gm_batch = gm_batch;
    return c;
  }

  json to_json() const {
    return {{"method", method},
            {"ratio", ratio},
            {"r_ps", r_ps},
            {"fixed_k", fixed_k},
            {"outer_epochs", outer_epochs},
            {"eta", eta},
            {"lr_decay_factor", lr_decay_factor},
            {"lr_decay_every", lr_decay_every},
            {"lr_floor", lr_floor},
            {"inner_lr", inner_lr},
            {"val_batch", val_batch},
            {"init_scheme", init_scheme},
            {"baseline", baseline},
            {"mask_samples", mask_samples},
            {"warm_start", warm_start},
            {"finalize", finalize},
            {"svp_direction", svp_direction},
            {"gm_distance", gm_distance},
            {"gm_epochs", gm_epochs},
            {"gm_lr", gm_lr},
            {"gm_batch", gm_batch},
            {"gm_from_pool", gm_from_pool}};
  }
};

void add_condense_flags(CLI::App* cmd, CondenseFlags& f) {
  cmd->add_option("--method", f.method)
      ->check(CLI::IsMember({"dconrec", "gradmatch", "random", "majority", "svp_cf"}));
  cmd->add_option("--ratio", f.ratio)->check(CLI::Range(1e-9, 1.0));
  cmd->add_option("--r-ps", f.r_ps);
  cmd->add_option("--fixed-k", f.fixed_k);
  cmd->add_option("--outer-epochs", f.outer_epochs);
  cmd->add_option("--eta", f.eta);
  cmd->add_option("--lr-decay-factor", f.lr_decay_factor);
  cmd->add_option("--lr-decay-every", f.lr_decay_every);
  cmd->add_option("--lr-floor", f.lr_floor);
  cmd->add_option("--inner-lr", f.inner_lr);
  cmd->add_option("--val-batch", f.val_batch);
  cmd->add_option("--init-scheme", f.init_scheme)
      ->check(CLI::IsMember({"uniform", "origin-weighted"}));
  cmd->add_flag("--baseline", f.baseline);
  cmd->add_option("--mask-samples", f.mask_samples);
  cmd->add_flag("--warm-start", f.warm_start);
  cmd->add_option("--finalize", f.finalize)->check(CLI::IsMember({"topk", "bernoulli"}));
  cmd->add_option("--svp-direction", f.svp_direction)
      ->check(CLI::IsMember({"hardest", "easiest"}));
  cmd->add_option("--gm-distance", f.gm_distance)
      ->check(CLI::IsMember({"cosine", "euclidean"}));
  cmd->add_option("--gm-epochs", f.gm_epochs);
  cmd->add_option("--gm-lr", f.gm_lr);
  cmd->add_option("--gm-batch", f.gm_batch);
  cmd->add_flag("--gm-from-pool", f.gm_from_pool);
}

// ---------------------------------------------------------------------------
// pipeline pieces shared by `condense`, `train-eval` and `sweep`

struct CondenseArtifacts {
  fs::path condensed;
};

CondenseArtifacts run_condense_pipeline(const std::string& train_path,
                                        const std::string& val_path,
                                        const std::string& pool_path,
                                        const fs::path& out_dir,
                                        const CondenseFlags& flags,
                                        const TrainFlags& proxy_flags,
                                        const TrainFlags& backbone_flags,
                                        std::uint64_t seed) {
  require_exists(train_path);
  fs::create_directories(out_dir);

  std::vector<std::string> paths{train_path};
  if (!val_path.empty()) paths.push_back(val_path);
  auto sets = load_unified(paths);
  const InteractionSet train = std::move(sets[0]);
  const InteractionSet val =
      val_path.empty() ? InteractionSet::from_pairs(train.n_users(), train.n_items(), {})
                       : std::move(sets[1]);

  const std::string provenance = "seed=" + std::to_string(seed) +
                                 " method=" + flags.method +
                                 " ratio=" + std::to_string(flags.ratio);

  // Data pool: reuse a saved one, or mine it with a proxy. Selection
  // baselines and gradmatch-from-train work on the training set alone.
  DataPool pool;
  const bool needs_pool =
      flags.method == "dconrec" || (flags.method == "gradmatch" && flags.gm_from_pool);
  if (needs_pool) {
    if (!pool_path.empty()) {
      require_exists(pool_path);
      pool = load_pool(pool_path, train.n_users(), train.n_items());
    } else {
      const auto proxy = train_proxy(train, val, arch_from_name(proxy_flags.arch),
                                     proxy_flags.to_config(derive_seed(seed, 101)));
      pool = build_data_pool(train, proxy, flags.r_ps, seed, flags.fixed_k);
    }
    save_pool(pool, (out_dir / "pool.tsv").string(), provenance);
  } else {
    pool = assemble_pool(train, InteractionSet::from_pairs(train.n_users(),
                                                           train.n_items(), {}));
  }

  InteractionSet condensed;
  if (flags.method == "dconrec") {
    auto cfg = flags.to_config(seed);
    auto backbone = backbone_flags.to_config(seed);
    auto [mask, monitor] = condense(pool, train, val, backbone, cfg);
    Rng rng(derive_seed(seed, 211));
    condensed = finalize_dataset(mask,
                                 flags.finalize == "bernoulli"
                                     ? FinalizeMode::bernoulli
                                     : FinalizeMode::topk,
                                 rng);
    if (condensed.empty())
      std::cerr << "warning: empty condensed dataset (all probabilities ~ 0)\n";
    save_mask(mask, (out_dir / "mask.tsv").string(), provenance);
    save_monitor(monitor, (out_dir / "monitor.csv").string());
  } else if (flags.method == "gradmatch") {
    auto result = gradmatch_condense(pool, train, flags.ratio,
                                     backbone_flags.to_config(seed),
                                     flags.to_baseline_config(seed));
    condensed = std::move(result.condensed);
    save_mask(result.mask, (out_dir / "mask.tsv").string(), provenance);
    std::ofstream mon(out_dir / "monitor.csv");
    mon << "iter,outer_loss,grad_mapping_sq,sum_s,eta\n";
    for (std::size_t t = 0; t < result.distance_per_epoch.size(); ++t)
      mon << t << ',' << result.distance_per_epoch[t] << ",0,"
          << result.sum_s_per_epoch[t] << ',' << flags.gm_lr << '\n';
  } else {
    if (flags.method == "random") {
      condensed = random_select(train, flags.ratio, seed);
    } else if (flags.method == "majority") {
      condensed = majority_select(train, flags.ratio);
    } else {
      condensed = svp_cf_select(train, val, flags.ratio,
                                proxy_flags.to_config(derive_seed(seed, 101)),
                                flags.svp_direction == "easiest"
                                    ? SvpDirection::easiest
                                    : SvpDirection::hardest);
    }
    // same artifact schema: a 0/1 mask over the training support
    ProbabilityMask mask;
    mask.n_users = train.n_users();
    mask.n_items = train.n_items();
    mask.support = train.pairs();
    mask.probs.assign(train.size(), 0.0);
    mask.budget = flags.ratio * static_cast<double>(train.size());
    for (std::size_t k = 0; k < train.size(); ++k) {
      const auto& p = train.pairs()[k];
      if (condensed.contains(p.first, p.second)) mask.probs[k] = 1.0;
    }
    save_mask(mask, (out_dir / "mask.tsv").string(), provenance);
    std::ofstream mon(out_dir / "monitor.csv");
    mon << "iter,outer_loss,grad_mapping_sq,sum_s,eta\n";
  }

  CondenseArtifacts artifacts;
  artifacts.condensed = out_dir / "condensed.tsv";
  save_interactions(condensed, artifacts.condensed.string(), provenance);
  return artifacts;
}

EvalReport run_train_eval(const std::string& train_file, const std::string& exclude_file,
                          const std::string& val_path, const std::string& test_path,
                          const fs::path& out_dir, const TrainFlags& model_flags,
                          const std::vector<int>& ks, const std::vector<int>& groups,
                          bool export_emb, std::uint64_t seed, const json& metadata) {
  require_exists(train_file);
  require_exists(test_path);
  fs::create_directories(out_dir);

  std::vector<std::string> paths{train_file, test_path};
  const std::string excl = exclude_file.empty() ? train_file : exclude_file;
  paths.push_back(excl);
  if (!val_path.empty()) paths.push_back(val_path);
  auto sets = load_unified(paths);
  const InteractionSet train_data = std::move(sets[0]);
  const InteractionSet test = std::move(sets[1]);
  const InteractionSet exclusion = std::move(sets[2]);
  const InteractionSet val =
      val_path.empty()
          ? InteractionSet::from_pairs(train_data.n_users(), train_data.n_items(), {})
          : std::move(sets[3]);

  auto cfg = model_flags.to_config(seed);
  auto model = init_model(train_data.n_users(), train_data.n_items(), cfg,
                          cfg.arch == Arch::lightgcn ? &train_data : nullptr);
  model = train(std::move(model), train_data, val, cfg);

  std::optional<UserGroupPartition> partition;
  if (groups.size() == 2)
    partition = group_users(exclusion, groups[0], groups[1]);

  DatasetSplit split;
  split.train = exclusion;
  split.validation = val;
  split.test = test;
  auto report = evaluate(model, split, ks, partition ? &*partition : nullptr);

  json j;
  j["metrics"] = report.values;
  j["n_evaluated_users"] = report.n_evaluated_users;
  j["group_user_counts"] = report.group_user_counts;
  j["metadata"] = metadata;
  write_json(j, out_dir / "report.json");

  save_model(model, (out_dir / "model.txt").string());
  if (export_emb) export_embeddings(model, (out_dir / "embeddings.tsv").string());
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recommendation dataset condensation toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; flags override its keys");

  // ---- split ----
  auto* sp = app.add_subcommand("split", "Split raw interactions into train/val/test");
  std::string sp_input, sp_out, sp_format = "auto", sp_fractions = "0.8,0.1,0.1",
                                sp_mode = "per-user";
  std::uint64_t sp_seed = 0;
  sp->add_option("--input", sp_input)->required();
  sp->add_option("--out", sp_out)->required();
  sp->add_option("--format", sp_format)->check(CLI::IsMember({"auto", "tsv", "csv"}));
  sp->add_option("--fractions", sp_fractions);
  sp->add_option("--mode", sp_mode)->check(CLI::IsMember({"per-user", "global"}));
  sp->add_option("--seed", sp_seed);

  // ---- augment ----
  auto* au = app.add_subcommand("augment", "Mine pseudo pairs and write the data pool");
  std::string au_train, au_val, au_out;
  double au_rps = 0.3;
  int au_fixed_k = -1;
  std::uint64_t au_seed = 0;
  TrainFlags au_proxy;
  au->add_option("--train", au_train)->required();
  au->add_option("--val", au_val);
  au->add_option("--out", au_out)->required();
  au->add_option("--r-ps", au_rps);
  au->add_option("--fixed-k", au_fixed_k);
  au->add_option("--seed", au_seed);
  add_train_flags(au, au_proxy);

  // ---- condense ----
  auto* co = app.add_subcommand("condense", "Produce a condensed training set");
  std::string co_train, co_val, co_out, co_pool;
  std::uint64_t co_seed = 0;
  CondenseFlags co_flags;
  TrainFlags co_proxy, co_backbone;
  co_proxy.epochs = 100;
  co_backbone.epochs = 0;  // backbone flags only seed the one-step inner model
  co->add_option("--train", co_train)->required();
  co->add_option("--val", co_val);
  co->add_option("--out", co_out)->required();
  co->add_option("--pool", co_pool);
  co->add_option("--seed", co_seed);
  add_condense_flags(co, co_flags);
  add_train_flags(co, co_proxy, "proxy-");
  add_train_flags(co, co_backbone, "backbone-");

  // ---- train-eval ----
  auto* te = app.add_subcommand("train-eval", "Train a test model and evaluate it");
  std::string te_train, te_exclude, te_val, te_test, te_out;
  std::string te_ks = "5,10", te_groups;
  bool te_export = false;
  std::uint64_t te_seed = 0;
  std::string te_label;
  double te_ratio = -1, te_rps = -1;
  TrainFlags te_model;
  te->add_option("--train-file", te_train)->required();
  te->add_option("--exclude", te_exclude);
  te->add_option("--val", te_val);
  te->add_option("--test", te_test)->required();
  te->add_option("--out", te_out)->required();
  te->add_option("--ks", te_ks);
  te->add_option("--groups", te_groups);
  te->add_flag("--export-embeddings", te_export);
  te->add_option("--seed", te_seed);
  te->add_option("--method-label", te_label);
  te->add_option("--ratio", te_ratio);
  te->add_option("--r-ps", te_rps);
  add_train_flags(te, te_model);
  te->get_option("--arch")->description("test model architecture");

  // ---- sweep ----
  auto* sw = app.add_subcommand("sweep", "Grid of condense + train-eval runs");
  std::string sw_data, sw_train, sw_val, sw_test, sw_out;
  std::string sw_axis = "ratio", sw_values = "0.1,0.25,0.5", sw_seeds = "0";
  std::string sw_ks = "5,10";
  CondenseFlags sw_flags;
  TrainFlags sw_proxy, sw_model;
  sw->add_option("--data", sw_data);
  sw->add_option("--train", sw_train);
  sw->add_option("--val", sw_val);
  sw->add_option("--test", sw_test);
  sw->add_option("--out", sw_out)->required();
  sw->add_option("--axis", sw_axis)->check(CLI::IsMember({"ratio", "r_ps"}));
  sw->add_option("--values", sw_values);
  sw->add_option("--seeds", sw_seeds);
  sw->add_option("--ks", sw_ks);
  add_condense_flags(sw, sw_flags);
  add_train_flags(sw, sw_proxy, "proxy-");
  add_train_flags(sw, sw_model, "model-");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  try {
    if (*sp) {
      require_exists(sp_input);
      fs::create_directories(sp_out);
      const auto loaded = load_interactions(sp_input, format_for(sp_format, sp_input));
      if (loaded.duplicates_dropped > 0)
        std::cerr << "note: dropped " << loaded.duplicates_dropped
                  << " duplicate pairs\n";
      const auto f = parse_doubles(sp_fractions);
      if (f.size() != 3) throw UsageFailure("--fractions needs three values");
      const auto split = split_dataset(
          loaded.data, {f[0], f[1], f[2]}, sp_seed,
          sp_mode == "global" ? SplitMode::global : SplitMode::per_user);
      const fs::path out(sp_out);
      const std::string prov = "seed=" + std::to_string(sp_seed) + " mode=" + sp_mode;
      save_interactions(split.train, (out / "train.tsv").string(), prov);
      save_interactions(split.validation, (out / "val.tsv").string(), prov);
      save_interactions(split.test, (out / "test.tsv").string(), prov);
      save_id_map(loaded.ids, (out / "id_map.tsv").string());
      write_json({{"command", "split"},
                  {"input", sp_input},
                  {"fractions", f},
                  {"mode", sp_mode},
                  {"seed", sp_seed},
                  {"n_users", loaded.data.n_users()},
                  {"n_items", loaded.data.n_items()},
                  {"n_interactions", loaded.data.size()},
                  {"duplicates_dropped", loaded.duplicates_dropped}},
                 out / "run_config.json");
    } else if (*au) {
      require_exists(au_train);
      fs::create_directories(au_out);
      std::vector<std::string> paths{au_train};
      if (!au_val.empty()) paths.push_back(au_val);
      auto sets = load_unified(paths);
      const auto& train_data = sets[0];
      const InteractionSet val =
          au_val.empty() ? InteractionSet::from_pairs(train_data.n_users(),
                                                      train_data.n_items(), {})
                         : sets[1];
      const auto proxy =
          train_proxy(train_data, val, arch_from_name(au_proxy.arch),
                      au_proxy.to_config(derive_seed(au_seed, 101)));
      const auto pool = build_data_pool(train_data, proxy, au_rps, au_seed, au_fixed_k);
      const fs::path out(au_out);
      save_pool(pool, (out / "pool.tsv").string(), "seed=" + std::to_string(au_seed));
      save_model(proxy, (out / "proxy_model.txt").string());
      write_json({{"command", "augment"},
                  {"train", au_train},
                  {"val", au_val},
                  {"seed", au_seed},
                  {"r_ps", au_rps},
                  {"fixed_k", au_fixed_k},
                  {"realized_r_ps", pool.r_ps},
                  {"proxy", au_proxy.to_json()}},
                 out / "run_config.json");
    } else if (*co) {
      run_condense_pipeline(co_train, co_val, co_pool, co_out, co_flags, co_proxy,
                            co_backbone, co_seed);
      write_json({{"command", "condense"},
                  {"train", co_train},
                  {"val", co_val},
                  {"pool", co_pool},
                  {"seed", co_seed},
                  {"condense", co_flags.to_json()},
                  {"proxy", co_proxy.to_json()},
                  {"backbone", co_backbone.to_json()}},
                 fs::path(co_out) / "run_config.json");
    } else if (*te) {
      json metadata{{"seed", te_seed},
                    {"method", te_label},
                    {"r", te_ratio},
                    {"r_ps", te_rps},
                    {"train_file", te_train}};
      const auto ks = parse_ints(te_ks);
      const auto groups = te_groups.empty() ? std::vector<int>{} : parse_ints(te_groups);
      if (!groups.empty() && groups.size() != 2)
        throw UsageFailure("--groups needs exactly two thresholds");
      run_train_eval(te_train, te_exclude, te_val, te_test, te_out, te_model, ks,
                     groups, te_export, te_seed, metadata);
      write_json({{"command", "train-eval"},
                  {"train_file", te_train},
                  {"exclude", te_exclude},
                  {"val", te_val},
                  {"test", te_test},
                  {"seed", te_seed},
                  {"ks", ks},
                  {"groups", groups},
                  {"model", te_model.to_json()},
                  {"metadata", metadata}},
                 fs::path(te_out) / "run_config.json");
    } else if (*sw) {
      const fs::path out(sw_out);
      fs::create_directories(out);
      const auto values = parse_doubles(sw_values);
      const auto seeds = parse_seeds(sw_seeds);
      const auto ks = parse_ints(sw_ks);
      if (values.empty() || seeds.empty())
        throw UsageFailure("sweep needs --values and --seeds");

      std::string train_p = sw_train, val_p = sw_val, test_p = sw_test;
      if (!sw_data.empty()) {
        require_exists(sw_data);
        const fs::path split_dir = out / "split";
        if (!fs::exists(split_dir / "train.tsv")) {
          fs::create_directories(split_dir);
          const auto loaded = load_interactions(sw_data, format_for("auto", sw_data));
          const auto split = split_dataset(loaded.data, {0.8, 0.1, 0.1}, seeds[0]);
          save_interactions(split.train, (split_dir / "train.tsv").string());
          save_interactions(split.validation, (split_dir / "val.tsv").string());
          save_interactions(split.test, (split_dir / "test.tsv").string());
          save_id_map(loaded.ids, (split_dir / "id_map.tsv").string());
        }
        train_p = (split_dir / "train.tsv").string();
        val_p = (split_dir / "val.tsv").string();
        test_p = (split_dir / "test.tsv").string();
      }
      if (train_p.empty() || test_p.empty())
        throw UsageFailure("sweep needs --data or --train/--val/--test");

      std::ofstream csv(out / "sweep.csv");
      csv << "axis,value,seed,status";
      for (int k : ks) csv << ",recall@" << k;
      for (int k : ks) csv << ",ndcg@" << k;
      csv << '\n';

      bool any_failed = false;
      for (const double v : values) {
        for (const auto seed : seeds) {
          std::ostringstream cell_name;
          cell_name << sw_axis << '=' << v << "_seed=" << seed;
          const fs::path cell = out / "cells" / cell_name.str();
          const fs::path report_path = cell / "report.json";
          csv << sw_axis << ',' << v << ',' << seed;
          try {
            if (!fs::exists(report_path)) {
              CondenseFlags flags = sw_flags;
              if (sw_axis == "ratio")
                flags.ratio = v;
              else
                flags.r_ps = v;
              const auto artifacts = run_condense_pipeline(
                  train_p, val_p, "", cell, flags, sw_proxy, sw_proxy, seed);
              json metadata{{"seed", seed},
                            {"method", flags.method},
                            {"r", flags.ratio},
                            {"r_ps", flags.r_ps}};
              run_train_eval(artifacts.condensed.string(), train_p, val_p, test_p,
                             cell, sw_model, ks, {}, false, seed, metadata);
            }
            std::ifstream rin(report_path);
            const auto j = json::parse(rin);
            csv << ",ok";
            for (int k : ks)
              csv << ',' << j["metrics"].value("recall@" + std::to_string(k), 0.0);
            for (int k : ks)
              csv << ',' << j["metrics"].value("ndcg@" + std::to_string(k), 0.0);
            csv << '\n';
          } catch (const std::exception& e) {
            std::cerr << "cell " << cell_name.str() << " failed: " << e.what() << '\n';
            any_failed = true;
            csv << ",failed";
            for (std::size_t k = 0; k < 2 * ks.size(); ++k) csv << ',';
            csv << '\n';
          }
        }
      }
      write_json({{"command", "sweep"},
                  {"axis", sw_axis},
                  {"values", values},
                  {"seeds", seeds},
                  {"condense", sw_flags.to_json()},
                  {"model", sw_model.to_json()}},
                 out / "run_config.json");
      if (any_failed) return 1;
    }
  } catch (const UsageFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
