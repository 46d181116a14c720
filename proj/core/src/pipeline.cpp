#include "vdyn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "vdyn/analysis.hpp"
#include "vdyn/dates.hpp"
#include "vdyn/errors.hpp"
#include "vdyn/generate.hpp"
#include "vdyn/groups.hpp"
#include "vdyn/metrics.hpp"
#include "vdyn/sim.hpp"
#include "vdyn/trainer.hpp"
#include "vdyn/version.hpp"

namespace vdyn {

namespace {

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); i++) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> location_names(const LocationRegistry& reg) {
  std::vector<std::string> names;
  names.reserve(reg.all().size());
  for (const auto& info : reg.all()) names.push_back(info.name);
  return names;
}

std::ofstream open_artifact(const std::string& dir, const std::string& name) {
  std::filesystem::path p = std::filesystem::path(dir) / name;
  std::ofstream out(p, std::ios::binary);  // binary: no CRLF translation anywhere
  if (!out) throw data_error("cannot write " + p.string());
  return out;
}

void write_preamble(std::ostream& os, const Config& cfg, const std::string& command,
                    std::uint64_t seed) {
  os << "# viraldyn " << command << "\n";
  os << "# build = " << build_id() << "\n";
  os << "# seed = " << seed << "\n";
  std::istringstream echo(cfg.canonical_echo());
  std::string line;
  while (std::getline(echo, line)) os << "# " << line << "\n";
}

void write_matrix_tsv(std::ostream& os, const std::vector<std::string>& names,
                      const std::vector<double>& m_values) {
  const std::size_t m = names.size();
  os << "location";
  for (const auto& n : names) os << "\t" << n;
  os << "\n";
  for (std::size_t i = 0; i < m; i++) {
    os << names[i];
    for (std::size_t j = 0; j < m; j++) os << "\t" << fmt("%.9g", m_values[i * m + j]);
    os << "\n";
  }
}

// Reads a matrix written by write_matrix_tsv, reordering rows/columns into
// the order of `names`.
std::vector<double> read_matrix_tsv(const std::string& path,
                                    const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open matrix file: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  const std::size_t m = names.size();
  if (rows.size() != m + 1) {
    throw data_error(path + ": expected header plus " + std::to_string(m) + " rows");
  }
  std::map<std::string, std::size_t> col;  // file column -> our index
  for (std::size_t j = 1; j < rows[0].size(); j++) col[rows[0][j]] = j;
  std::map<std::string, std::size_t> ours;
  for (std::size_t i = 0; i < m; i++) ours[names[i]] = i;
  std::vector<double> out(m * m, 0.0);
  for (std::size_t r = 1; r < rows.size(); r++) {
    const auto& cells = rows[r];
    if (cells.size() != m + 1) throw data_error(path + ": ragged matrix row");
    auto it = ours.find(cells[0]);
    if (it == ours.end()) throw data_error(path + ": unknown location " + cells[0]);
    const std::size_t i = it->second;
    for (const auto& name : names) {
      auto jt = col.find(name);
      if (jt == col.end()) throw data_error(path + ": missing column " + name);
      out[i * m + ours[name]] = std::stod(cells[jt->second]);
    }
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  std::uint64_t x = seed;
  x ^= (a + 1) * 0x9E3779B97F4A7C15ULL;
  x ^= (b + 1) * 0xC2B2AE3D27D4EB4FULL;
  x ^= (c + 1) * 0x165667B19E3779F9ULL;
  x ^= x >> 29;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 32;
  return x;
}

void check_corpus_matches_model(const ModelBundle& bundle, const Corpus& corpus) {
  const std::string res = bundle.echo.get_str("derived.residues", "");
  if (res != corpus.vocab.residues()) {
    throw config_error("checkpoint and corpus disagree on the residue alphabet (" + res +
                       " vs " + corpus.vocab.residues() + ")");
  }
  const std::string locs = bundle.echo.get_str("derived.locations", "");
  const std::string here = join(location_names(corpus.locations), ",");
  if (locs != here) {
    throw config_error("checkpoint and corpus disagree on locations (" + locs + " vs " +
                       here + ")");
  }
}

TrainOptions train_options(const Config& cfg) {
  TrainOptions t;
  t.steps = cfg.get_int("train.steps", 1000);
  t.batch_size = cfg.get_int("train.batch", 32);
  t.lr = cfg.get_num("train.lr", 1e-3);
  t.beta1 = cfg.get_num("train.beta1", 0.9);
  t.beta2 = cfg.get_num("train.beta2", 0.999);
  t.eps = cfg.get_num("train.eps", 1e-8);
  t.warmup_frac = cfg.get_num("train.warmup", 0.1);
  t.log_every = cfg.get_int("train.log_every", 50);
  if (t.steps < 0) throw config_error("train.steps must be >= 0");
  return t;
}

int resolve_location(const std::vector<std::string>& names, const std::string& value) {
  for (std::size_t i = 0; i < names.size(); i++) {
    if (names[i] == value) return static_cast<int>(i);
  }
  char* end = nullptr;
  long idx = std::strtol(value.c_str(), &end, 10);
  if (end != value.c_str() && *end == '\0' && idx >= 0 &&
      idx < static_cast<long>(names.size())) {
    return static_cast<int>(idx);
  }
  throw config_error("unknown location: " + value);
}

std::vector<Sample> read_subset_file(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open subset file: " + path);
  std::vector<Sample> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line[0] == '>') continue;
    Sample s;
    s.id = "s" + std::to_string(n++);
    s.tokens = vocab.encode(line);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

SequenceModel& ModelBundle::seq() {
  if (transmission) return *transmission;
  if (global) return *global;
  throw config_error("model bundle is empty");
}

TrainableModel& ModelBundle::trainable() {
  if (transmission) return *transmission;
  if (global) return *global;
  throw config_error("model bundle is empty");
}

Config effective_config(const RunOptions& opt) {
  Config cfg;
  if (!opt.config_path.empty()) cfg = Config::from_file(opt.config_path);
  for (const auto& kv : opt.overrides) cfg.apply_override(kv);
  return cfg;
}

ModelConfig parse_model_config(const Config& cfg) {
  ModelConfig mc;
  mc.encoder.embed_dim = cfg.get_int("model.embed_dim", 32);
  mc.encoder.hidden_dim = cfg.get_int("model.hidden_dim", 128);
  mc.encoder.num_layers = cfg.get_int("model.layers", 2);
  mc.encoder.window = cfg.get_int("model.window", 16);
  mc.encoder.max_positions = cfg.get_int("model.max_positions", 512);
  mc.hierarchical = cfg.get_flag("model.hierarchical", false);
  const std::string im = cfg.get_str("model.inter_mode", "g2l");
  if (im == "g2l") {
    mc.inter_mode = InterMode::G2L;
  } else if (im == "g2g") {
    mc.inter_mode = InterMode::G2G;
  } else {
    throw config_error("model.inter_mode must be g2l or g2g, got: " + im);
  }
  const std::string pos = cfg.get_str("model.positivity", "softplus");
  if (pos == "softplus") {
    mc.positivity = Positivity::Softplus;
  } else if (pos == "sigmoid") {
    mc.positivity = Positivity::Sigmoid;
  } else {
    throw config_error("model.positivity must be softplus or sigmoid, got: " + pos);
  }
  mc.share_encoders = cfg.get_flag("model.share_encoders", true);
  mc.eig_top_k = cfg.get_int("model.eig_top_k", 0);
  mc.rescale = cfg.get_flag("model.rescale", true);
  mc.include_eos = cfg.get_flag("model.include_eos", true);
  mc.lambda_group = cfg.get_num("model.lambda_group", 0.1);
  mc.rate_bias_init = cfg.get_num("model.rate_bias_init", -3.0);
  return mc;
}

Corpus corpus_from_config(const Config& cfg, std::uint64_t seed) {
  Corpus corpus;
  const std::string cache = cfg.get_str("data.cache", "");
  if (!cache.empty() && std::filesystem::exists(cache)) {
    corpus = load_corpus_cache(cache);
  } else {
    CorpusOptions opt;
    opt.unit_days = cfg.get_num("data.unit_days", 7.0);
    opt.epoch = cfg.get_str("data.epoch", "");
    opt.min_count = cfg.get_int("data.min_count", 0);
    opt.residues = cfg.get_str("data.residues", "");
    corpus = load_corpus(cfg.require_str("data.samples"),
                         cfg.require_str("data.locations"), opt);
    if (!cache.empty()) save_corpus_cache(corpus, cache);
  }
  if (cfg.get_flag("data.shuffle_locations", false)) {
    shuffle_locations(corpus, cfg.get_u64("data.shuffle_seed", seed));
  }
  return corpus;
}

void resolve_groups(const Config& cfg, LocationRegistry& registry) {
  const std::string spec = cfg.get_str("model.groups", "labels");
  if (spec == "labels") {
    if (registry.num_groups() == 0) {
      throw config_error(
          "model.groups = labels but the locations file has no group labels");
    }
    return;
  }
  if (spec.rfind("cluster:", 0) == 0) {
    const int k = std::atoi(spec.c_str() + 8);
    if (k < 1 || k > registry.size()) {
      throw config_error("model.groups cluster count out of range: " + spec);
    }
    std::vector<int> assign = cluster_locations(registry, k);
    std::vector<std::string> labels;
    for (int g = 0; g < k; g++) labels.push_back("C" + std::to_string(g));
    registry.assign_groups(assign, labels);
    return;
  }
  throw config_error("model.groups must be 'labels' or 'cluster:<k>', got: " + spec);
}

ModelBundle build_model(const Config& cfg, const Vocabulary& vocab,
                        const LocationRegistry& registry, std::uint64_t seed) {
  ModelBundle bundle;
  ModelConfig mc = parse_model_config(cfg);
  const std::string type = cfg.get_str("model.type", "transmission");
  if (type == "transmission") {
    bundle.transmission =
        std::make_unique<TransmissionModel>(vocab, registry, mc, seed);
  } else if (type == "global") {
    bundle.global = std::make_unique<GlobalModel>(vocab, registry.size(), mc, seed);
  } else {
    throw config_error("model.type must be transmission or global, got: " + type);
  }

  Config echo = cfg;
  const std::vector<std::string> names = location_names(registry);
  for (const auto& n : names) {
    if (n.find(',') != std::string::npos) {
      throw data_error("location names must not contain commas: " + n);
    }
  }
  echo.set("derived.residues", vocab.residues());
  echo.set("derived.locations", join(names, ","));
  if (registry.num_groups() > 0) {
    std::vector<std::string> gs;
    for (int g : registry.group_of()) gs.push_back(std::to_string(g));
    echo.set("derived.location_groups", join(gs, ","));
    echo.set("derived.group_labels", join(registry.group_labels(), ","));
  }
  echo.set("model.init_seed", std::to_string(seed));
  bundle.echo = std::move(echo);
  return bundle;
}

ModelBundle load_model_checkpoint(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  Config echo = Config::from_string(ckpt.config_echo, path);

  Vocabulary vocab = Vocabulary::from_residues(echo.require_str("derived.residues"));
  LocationRegistry registry;
  for (const auto& name : echo.get_list("derived.locations", "")) {
    LocationInfo info;
    info.name = name;
    registry.add(std::move(info));
  }
  if (registry.size() == 0) throw data_error(path + ": checkpoint lists no locations");
  if (echo.has("derived.location_groups")) {
    std::vector<int> assign;
    for (const auto& g : echo.get_list("derived.location_groups", "")) {
      assign.push_back(std::stoi(g));
    }
    registry.assign_groups(assign, echo.get_list("derived.group_labels", ""));
  }

  ModelBundle bundle =
      build_model(echo, vocab, registry, echo.get_u64("model.init_seed", 1));
  bundle.echo = std::move(echo);  // keep trainer.rng_state and friends verbatim
  restore_params(bundle.trainable().params(), ckpt);
  return bundle;
}

void save_model_checkpoint(ModelBundle& bundle, const std::string& rng_state,
                           const std::string& path) {
  Config echo = bundle.echo;
  if (!rng_state.empty()) echo.set("trainer.rng_state", rng_state);
  save_checkpoint(bundle.trainable().params(), echo.canonical_echo(), path);
}

void cmd_simulate(const Config& cfg, const std::string& out_dir, std::uint64_t seed) {
  SimConfig sc;
  sc.num_locations = cfg.get_int("sim.locations", 6);
  const int num_groups = cfg.get_int("sim.num_groups", 0);
  if (cfg.has("sim.group_of")) {
    for (const auto& g : cfg.get_list("sim.group_of", "")) {
      sc.group_of.push_back(std::stoi(g));
    }
  } else if (num_groups > 0) {
    const int per = (sc.num_locations + num_groups - 1) / num_groups;
    for (int i = 0; i < sc.num_locations; i++) sc.group_of.push_back(i / per);
  }
  if (cfg.has("sim.migration")) {
    for (const auto& v : cfg.get_list("sim.migration", "")) {
      sc.migration.push_back(std::stod(v));
    }
  }
  sc.migration_self = cfg.get_num("sim.migration_self", sc.migration_self);
  sc.migration_intra = cfg.get_num("sim.migration_intra", sc.migration_intra);
  sc.migration_inter = cfg.get_num("sim.migration_inter", sc.migration_inter);
  sc.growth = cfg.get_num("sim.growth", sc.growth);
  sc.mutation_rate = cfg.get_num("sim.mutation", sc.mutation_rate);
  sc.fitness_sd = cfg.get_num("sim.fitness_sd", sc.fitness_sd);
  sc.seq_len = cfg.get_int("sim.seq_len", sc.seq_len);
  sc.generations = cfg.get_int("sim.generations", sc.generations);
  sc.capacity = cfg.get_int("sim.capacity", sc.capacity);
  sc.sampling_rate = cfg.get_num("sim.sampling", sc.sampling_rate);
  sc.residues = cfg.get_str("sim.residues", sc.residues);
  sc.founder = cfg.get_str("sim.founder", sc.founder);
  sc.init_population = cfg.get_int("sim.init_population", sc.init_population);
  sc.track_lineage = cfg.get_flag("sim.track_lineage", false);
  sc.epoch = cfg.get_str("sim.epoch", sc.epoch);
  sc.unit_days = cfg.get_num("sim.unit_days", sc.unit_days);
  sc.seed = seed;

  SimResult res = run_simulation(sc);
  if (res.extinct) {
    std::cerr << "warning: all populations extinct at generation " << res.last_generation
              << "; corpus and trace are partial\n";
  }
  const Corpus& corpus = res.corpus;
  const std::vector<std::string> names = location_names(corpus.locations);

  {
    auto out = open_artifact(out_dir, "samples.tsv");
    write_preamble(out, cfg, "simulate", seed);
    out << "id\tsequence\tlocation\tdate\n";
    for (const auto& s : corpus.samples) {
      const std::int64_t days =
          corpus.epoch_days + static_cast<std::int64_t>(std::llround(s.time * corpus.unit_days));
      out << s.id << "\t" << corpus.vocab.decode(s.tokens) << "\t" << names[s.location]
          << "\t" << format_iso_date(days) << "\n";
    }
  }
  {
    auto out = open_artifact(out_dir, "locations.tsv");
    write_preamble(out, cfg, "simulate", seed);
    out << "location\tgroup\tlat\tlon\n";
    for (const auto& info : corpus.locations.all()) {
      out << info.name << "\t" << info.group_label << "\t" << fmt("%.4f", info.lat)
          << "\t" << fmt("%.4f", info.lon) << "\n";
    }
  }
  {
    auto out = open_artifact(out_dir, "trace.tsv");
    write_preamble(out, cfg, "simulate", seed);
    out << "generation\tfrom\tto\tcount\n";
    for (const auto& row : res.trace) {
      out << row.generation << "\t" << names[row.from] << "\t" << names[row.to] << "\t"
          << row.count << "\n";
    }
  }
  {
    auto out = open_artifact(out_dir, "true_rates.tsv");
    write_preamble(out, cfg, "simulate", seed);
    write_matrix_tsv(out, names, res.ground_truth_rates);
  }
  if (sc.track_lineage) {
    auto out = open_artifact(out_dir, "lineage.tsv");
    write_preamble(out, cfg, "simulate", seed);
    out << "generation\tid\tparent\n";
    for (const auto& row : res.lineage) {
      out << row.generation << "\t" << row.id << "\t" << row.parent_id << "\n";
    }
  }
}

void cmd_train(const Config& cfg, const std::string& out_dir, std::uint64_t seed) {
  Corpus corpus = corpus_from_config(cfg, seed);
  Corpus train_side = corpus;
  if (cfg.has("data.train_cutoff")) {
    train_side = split_by_time(corpus, cfg.get_num("data.train_cutoff", 0.0)).first;
  }

  ModelBundle bundle;
  std::string resume_rng;
  if (cfg.has("train.resume")) {
    bundle = load_model_checkpoint(cfg.require_str("train.resume"));
    check_corpus_matches_model(bundle, corpus);
    resume_rng = bundle.echo.get_str("trainer.rng_state", "");
  } else {
    LocationRegistry registry = corpus.locations;
    ModelConfig mc = parse_model_config(cfg);
    if (cfg.get_str("model.type", "transmission") == "transmission" && mc.hierarchical) {
      resolve_groups(cfg, registry);
    }
    bundle = build_model(cfg, corpus.vocab, registry, seed);
  }

  TrainOptions topt = train_options(cfg);
  Trainer trainer(bundle.trainable(), train_side.samples, topt, seed);
  if (!resume_rng.empty()) trainer.rng().set_state(resume_rng);

  std::int64_t target = topt.steps;
  const std::int64_t stop_at = cfg.get_int("train.stop_at", 0);
  if (stop_at > 0) target = std::min<std::int64_t>(target, stop_at);
  const std::int64_t every = cfg.get_int("train.checkpoint_every", 0);
  const std::string ckpt_path =
      (std::filesystem::path(out_dir) / "model.vdm").string();

  auto log = open_artifact(out_dir, "train_log.tsv");
  write_preamble(log, cfg, "train", seed);
  log << "step\tloss\tlr\tclamped\telapsed_ms\n";
  const auto t0 = std::chrono::steady_clock::now();
  auto on_log = [&](const TrainLogRow& row) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    log << row.step << "\t" << fmt("%.6f", row.loss) << "\t" << fmt("%.8g", row.lr)
        << "\t" << row.clamped << "\t" << ms << "\n";
    log.flush();
  };

  ParameterStore& store = bundle.trainable().params();
  while (store.step() < target) {
    std::int64_t upto = target;
    if (every > 0) upto = std::min<std::int64_t>(target, store.step() + every);
    trainer.run(upto, on_log);
    if (upto < target) save_model_checkpoint(bundle, trainer.rng().state_string(), ckpt_path);
  }
  save_model_checkpoint(bundle, trainer.rng().state_string(), ckpt_path);
}

void cmd_eval(const Config& cfg, const std::string& out_dir, std::uint64_t seed,
              bool strict) {
  Corpus corpus = corpus_from_config(cfg, seed);
  Corpus test_side = corpus;
  if (cfg.has("data.train_cutoff")) {
    test_side = split_by_time(corpus, cfg.get_num("data.train_cutoff", 0.0)).second;
  }
  ModelBundle bundle = load_model_checkpoint(cfg.require_str("eval.checkpoint"));
  check_corpus_matches_model(bundle, corpus);
  SequenceModel& model = bundle.seq();
  const std::vector<std::string> names = location_names(corpus.locations);

  const int min_count = cfg.get_int("eval.min_count", 1);
  std::map<std::pair<int, std::int64_t>, std::vector<const Sample*>> cells;
  for (const auto& s : test_side.samples) {
    cells[{s.location, static_cast<std::int64_t>(std::llround(s.time))}].push_back(&s);
  }
  for (auto it = cells.begin(); it != cells.end();) {
    if (static_cast<int>(it->second.size()) < min_count) {
      it = cells.erase(it);
    } else {
      ++it;
    }
  }

  auto out = open_artifact(out_dir, "metrics.csv");
  write_preamble(out, cfg, "eval", seed);
  out << "tau,location,time,nll,revnll_mean,revnll_lo,revnll_hi\n";
  if (cells.empty()) {
    std::cerr << "warning: no (location, time) cell has at least " << min_count
              << " test samples; metrics.csv is empty\n";
    return;
  }

  // Model NLL per cell, temperature independent.
  std::map<std::pair<int, std::int64_t>, double> cell_nll;
  for (const auto& [key, samples] : cells) {
    double acc = 0.0;
    for (const Sample* s : samples) {
      acc += per_token_nll(model, s->tokens, s->location, s->time);
    }
    cell_nll[key] = acc / static_cast<double>(samples.size());
  }

  // Per-location oracle ensembles trained on the full corpus (train and test
  // sides) so they stand apart from the model under evaluation.
  const bool want_rev = cfg.get_flag("eval.revnll", true);
  const int oracle_count = cfg.get_int("eval.oracle_count", 3);
  std::map<int, std::vector<std::unique_ptr<GlobalModel>>> oracles;
  if (want_rev) {
    ModelConfig oc;
    oc.encoder.embed_dim = cfg.get_int("eval.oracle_embed_dim", 16);
    oc.encoder.hidden_dim = cfg.get_int("eval.oracle_hidden_dim", 64);
    oc.encoder.num_layers = cfg.get_int("eval.oracle_layers", 2);
    oc.encoder.window = cfg.get_int("eval.oracle_window", 8);
    oc.encoder.max_positions = parse_model_config(bundle.echo).encoder.max_positions;
    oc.include_eos = parse_model_config(bundle.echo).include_eos;
    TrainOptions topt;
    topt.steps = cfg.get_int("eval.oracle_steps", 200);
    topt.batch_size = cfg.get_int("eval.oracle_batch", 16);
    topt.lr = cfg.get_num("eval.oracle_lr", 1e-2);
    topt.log_every = topt.steps + 1;

    std::set<int> locs;
    for (const auto& [key, samples] : cells) locs.insert(key.first);
    for (int loc : locs) {
      std::vector<Sample> loc_samples;
      for (const auto& s : corpus.samples) {
        if (s.location == loc) loc_samples.push_back(s);
      }
      std::vector<std::unique_ptr<GlobalModel>> ensemble;
      try {
        for (int k = 0; k < oracle_count; k++) {
          auto oracle = std::make_unique<GlobalModel>(
              corpus.vocab, corpus.locations.size(), oc, mix_seed(seed, loc, k, 1));
          Trainer t(*oracle, loc_samples, topt, mix_seed(seed, loc, k, 2));
          t.run();
          ensemble.push_back(std::move(oracle));
        }
      } catch (const std::exception& e) {
        if (strict) throw;
        std::cerr << "warning: oracle training failed for " << names[loc] << ": "
                  << e.what() << "; revNLL columns left empty\n";
        ensemble.clear();
      }
      oracles[loc] = std::move(ensemble);
    }
  }

  const std::vector<std::string> taus =
      cfg.get_list("eval.tau_list", "0.2,0.4,0.6,0.8,1.0");
  const int per_cell = cfg.get_int("eval.samples_per_cell", 100);
  const int max_len = cfg.get_int("eval.max_len", 60);

  for (std::size_t ti = 0; ti < taus.size(); ti++) {
    const double tau = std::stod(taus[ti]);
    for (const auto& kv : cells) {
      const auto& key = kv.first;
      const auto [loc, time] = key;
      std::string rev_mean, rev_lo, rev_hi;
      if (want_rev && !oracles[loc].empty()) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(loc),
                         static_cast<std::uint64_t>(time + 1000000), ti + 3));
        std::vector<GeneratedSeq> gen =
            sample_sequences(model, loc, static_cast<double>(time), per_cell, tau,
                             max_len, rng);
        std::vector<SequenceModel*> ptrs;
        for (auto& o : oracles[loc]) ptrs.push_back(o.get());
        RevNll r = reverse_nll(gen, loc, static_cast<double>(time), ptrs);
        rev_mean = fmt("%.6f", r.mean);
        rev_lo = fmt("%.6f", r.lo);
        rev_hi = fmt("%.6f", r.hi);
      }
      out << taus[ti] << "," << names[loc] << "," << time << ","
          << fmt("%.6f", cell_nll[key]) << "," << rev_mean << "," << rev_lo << ","
          << rev_hi << "\n";
    }
  }

  const std::vector<std::string> widths = cfg.get_list("eval.coverage_widths", "");
  if (!widths.empty()) {
    auto cov = open_artifact(out_dir, "coverage.csv");
    write_preamble(cov, cfg, "eval", seed);
    cov << "width,location,time,coverage\n";
    for (const auto& w_str : widths) {
      const int width = std::stoi(w_str);
      std::vector<double> values;
      for (const auto& [key, samples] : cells) {
        const auto [loc, time] = key;
        std::vector<GeneratedSeq> gen =
            beam_search(model, loc, static_cast<double>(time), width, max_len);
        std::vector<std::vector<int>> gen_tokens;
        for (const auto& g : gen) gen_tokens.push_back(g.tokens);
        std::vector<std::vector<int>> held;
        for (const Sample* s : samples) held.push_back(s->tokens);
        const double c = coverage(gen_tokens, held);
        values.push_back(c);
        cov << width << "," << names[loc] << "," << time << "," << fmt("%.6f", c)
            << "\n";
      }
      cov << width << ",all,all," << fmt("%.6f", median(values)) << "\n";
    }
  }
}

void cmd_generate(const Config& cfg, const std::string& out_dir, std::uint64_t seed) {
  ModelBundle bundle = load_model_checkpoint(cfg.require_str("generate.checkpoint"));
  SequenceModel& model = bundle.seq();
  const std::vector<std::string> names = bundle.echo.get_list("derived.locations", "");
  if (names.empty()) throw data_error("checkpoint lists no locations");

  const int loc = resolve_location(names, cfg.get_str("generate.location", names[0]));
  const double t = cfg.get_num("generate.time", 0.0);
  const int max_len = cfg.get_int("generate.max_len", 60);
  const std::string mode = cfg.get_str("generate.mode", "sample");

  std::vector<GeneratedSeq> gen;
  if (mode == "sample") {
    const int count = cfg.get_int("generate.count", 100);
    const double tau = cfg.get_num("generate.tau", 1.0);
    Rng rng(seed);
    gen = sample_sequences(model, loc, t, count, tau, max_len, rng);
    std::sort(gen.begin(), gen.end(), [](const GeneratedSeq& a, const GeneratedSeq& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      return a.tokens < b.tokens;
    });
  } else if (mode == "beam") {
    const int width = cfg.get_int("generate.beam_width", 50);
    gen = beam_search(model, loc, t, width, max_len);
    const int topk = cfg.get_int("generate.topk", width);
    if (static_cast<int>(gen.size()) > topk) gen.resize(topk);
  } else {
    throw config_error("generate.mode must be sample or beam, got: " + mode);
  }

  auto out = open_artifact(out_dir, "generated.fasta");
  write_preamble(out, cfg, "generate", seed);
  for (std::size_t i = 0; i < gen.size(); i++) {
    out << ">" << (i + 1) << "|" << fmt("%.6f", gen[i].logprob) << "|" << names[loc]
        << "|" << fmt("%g", t) << "\n";
    out << model.vocab().decode(gen[i].tokens) << "\n";
  }
}

void cmd_analyze(const Config& cfg, const std::string& out_dir, std::uint64_t seed) {
  ModelBundle bundle = load_model_checkpoint(cfg.require_str("analyze.checkpoint"));
  if (!bundle.transmission || bundle.transmission->config().hierarchical) {
    throw config_error(
        "rate matrices are defined for the non-hierarchical transmission model");
  }
  TransmissionModel& model = *bundle.transmission;
  const std::vector<std::string> names = bundle.echo.get_list("derived.locations", "");
  const std::size_t m = names.size();

  std::vector<Sample> samples;
  if (cfg.has("analyze.subset")) {
    samples = read_subset_file(cfg.require_str("analyze.subset"), model.vocab());
  } else {
    Corpus corpus = corpus_from_config(cfg, seed);
    check_corpus_matches_model(bundle, corpus);
    const std::string side = cfg.get_str("analyze.split", "all");
    if (side == "all") {
      samples = corpus.samples;
    } else if (side == "train") {
      samples = split_by_time(corpus, cfg.get_num("data.train_cutoff", 0.0)).first.samples;
    } else if (side == "test") {
      samples = split_by_time(corpus, cfg.get_num("data.train_cutoff", 0.0)).second.samples;
    } else {
      throw config_error("analyze.split must be all, train, or test, got: " + side);
    }
  }
  if (samples.empty()) throw data_error("no sequences to analyze");

  const std::vector<double> avg = avg_rate_matrix(model, samples);
  {
    auto out = open_artifact(out_dir, "avg_rates.tsv");
    write_preamble(out, cfg, "analyze", seed);
    write_matrix_tsv(out, names, avg);
  }
  {
    const std::vector<TreeEdge> tree = max_spanning_tree(avg, m);
    auto out = open_artifact(out_dir, "spanning_tree.tsv");
    write_preamble(out, cfg, "analyze", seed);
    out << "from\tto\tweight\n";
    for (const auto& e : tree) {
      out << names[e.from] << "\t" << names[e.to] << "\t" << fmt("%.9g", e.weight)
          << "\n";
    }
  }

  if (cfg.has("analyze.true_rates")) {
    const std::vector<double> truth =
        read_matrix_tsv(cfg.require_str("analyze.true_rates"), names);
    std::vector<double> a, b;
    for (std::size_t i = 0; i < m; i++) {
      for (std::size_t j = i + 1; j < m; j++) {
        a.push_back(avg[i * m + j]);
        b.push_back(truth[i * m + j]);
      }
    }
    auto out = open_artifact(out_dir, "rate_recovery.tsv");
    write_preamble(out, cfg, "analyze", seed);
    out << "spearman = " << fmt("%.6f", spearman(a, b)) << "\n";
    if (bundle.echo.has("derived.location_groups")) {
      std::vector<int> group;
      for (const auto& g : bundle.echo.get_list("derived.location_groups", "")) {
        group.push_back(std::stoi(g));
      }
      double intra = 0.0, inter = 0.0;
      int n_intra = 0, n_inter = 0;
      for (std::size_t i = 0; i < m; i++) {
        for (std::size_t j = 0; j < m; j++) {
          if (i == j) continue;
          if (group[i] == group[j]) {
            intra += avg[i * m + j];
            n_intra++;
          } else {
            inter += avg[i * m + j];
            n_inter++;
          }
        }
      }
      if (n_intra > 0) out << "intra_mean = " << fmt("%.9g", intra / n_intra) << "\n";
      if (n_inter > 0) out << "inter_mean = " << fmt("%.9g", inter / n_inter) << "\n";
    }
  }
}

int run_command(const RunOptions& opt) {
  try {
    Config cfg = effective_config(opt);
    std::filesystem::create_directories(opt.out_dir);
    if (opt.command == "simulate") {
      cmd_simulate(cfg, opt.out_dir, opt.seed);
    } else if (opt.command == "train") {
      cmd_train(cfg, opt.out_dir, opt.seed);
    } else if (opt.command == "eval") {
      cmd_eval(cfg, opt.out_dir, opt.seed, opt.strict);
    } else if (opt.command == "generate") {
      cmd_generate(cfg, opt.out_dir, opt.seed);
    } else if (opt.command == "analyze") {
      cmd_analyze(cfg, opt.out_dir, opt.seed);
    } else {
      throw config_error("unknown command: " + opt.command);
    }
    return 0;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace vdyn
