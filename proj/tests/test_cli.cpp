#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "vdyn/params.hpp"
#include "vdyn/pipeline.hpp"

using namespace vdyn;
using vdyn::testing::tmp_dir;
using vdyn::testing::write_file;

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE_MESSAGE(bool(is), "missing file: ", path);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

// non-comment lines, i.e. the artifact body under the '#' preamble
std::vector<std::string> body_of(const std::string& path) {
  std::vector<std::string> out;
  for (auto& line : lines_of(slurp(path))) {
    if (!line.empty() && line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

int run(const std::string& command, const std::string& config_path,
        const std::string& out_dir, std::uint64_t seed,
        std::vector<std::string> overrides = {}, bool strict = false) {
  RunOptions opt;
  opt.command = command;
  opt.config_path = config_path;
  opt.out_dir = out_dir;
  opt.seed = seed;
  opt.overrides = std::move(overrides);
  opt.strict = strict;
  return run_command(opt);
}

// One simulated corpus shared by the pipeline cases below.
struct SimulatedWorld {
  std::string dir;
  std::string sim_cfg;
  std::string samples;
  std::string locations;
  std::string true_rates;

  explicit SimulatedWorld(const std::string& tag, const std::string& extra = "") {
    dir = tmp_dir(tag);
    sim_cfg = write_file(dir, "sim.cfg",
                         "sim.locations = 3\n"
                         "sim.seq_len = 5\n"
                         "sim.generations = 8\n"
                         "sim.capacity = 80\n"
                         "sim.init_population = 30\n"
                         "sim.sampling = 0.6\n"
                         "sim.migration_intra = 0.3\n"
                         "sim.migration_inter = 0.05\n"
                         "sim.residues = ACD\n" +
                             extra);
    REQUIRE(run("simulate", sim_cfg, dir + "/sim", 5) == 0);
    samples = dir + "/sim/samples.tsv";
    locations = dir + "/sim/locations.tsv";
    true_rates = dir + "/sim/true_rates.tsv";
  }

  std::string data_block() const {
    return "data.samples = " + samples + "\ndata.locations = " + locations +
           "\ndata.residues = ACD\n";
  }

  std::string tiny_model_block() const {
    return "model.embed_dim = 4\nmodel.hidden_dim = 8\nmodel.layers = 1\n"
           "model.window = 4\nmodel.max_positions = 8\n";
  }
};

}  // namespace

TEST_CASE("simulate writes its artifact set with preambles and ISO dates") {
  const std::string dir = tmp_dir("cli_sim");
  const std::string cfg = write_file(dir, "sim.cfg",
                                     "sim.locations = 2\n"
                                     "sim.seq_len = 4\n"
                                     "sim.generations = 5\n"
                                     "sim.capacity = 40\n"
                                     "sim.init_population = 15\n"
                                     "sim.sampling = 0.5\n"
                                     "sim.residues = AC\n"
                                     "sim.epoch = 2023-06-01\n");
  REQUIRE(run("simulate", cfg, dir + "/out", 3) == 0);

  for (const char* name : {"samples.tsv", "locations.tsv", "trace.tsv", "true_rates.tsv"})
    CHECK(fs::exists(dir + "/out/" + name));
  CHECK_FALSE(fs::exists(dir + "/out/lineage.tsv"));

  const std::string samples = slurp(dir + "/out/samples.tsv");
  const auto all = lines_of(samples);
  REQUIRE(all.size() > 3);
  CHECK(all[0] == "# viraldyn simulate");
  CHECK(all[1].rfind("# build = ", 0) == 0);
  CHECK(all[2] == "# seed = 3");
  CHECK(samples.find("# sim.epoch = 2023-06-01") != std::string::npos);

  const auto body = body_of(dir + "/out/samples.tsv");
  REQUIRE(body.size() > 1);
  CHECK(body[0] == "id\tsequence\tlocation\tdate");
  // generation 1 at 7-day units from the configured epoch
  CHECK(body[1].find("2023-06-08") != std::string::npos);

  const auto locs = body_of(dir + "/out/locations.tsv");
  REQUIRE(locs.size() == 3);
  CHECK(locs[0] == "location\tgroup\tlat\tlon");
  CHECK(locs[1].rfind("L0\t\t", 0) == 0);  // ungrouped: empty label column

  // lineage appears on request
  REQUIRE(run("simulate", cfg, dir + "/out2", 3, {"sim.track_lineage=1"}) == 0);
  CHECK(fs::exists(dir + "/out2/lineage.tsv"));
  CHECK(body_of(dir + "/out2/lineage.tsv")[0] == "generation\tid\tparent");
}

TEST_CASE("simulate, train, eval, generate and analyze chain end to end") {
  SimulatedWorld world("cli_chain");

  // train a small flat model
  const std::string train_cfg = write_file(
      world.dir, "train.cfg",
      world.data_block() + world.tiny_model_block() +
          "train.steps = 3\ntrain.batch = 4\ntrain.lr = 0.01\ntrain.log_every = 1\n");
  REQUIRE(run("train", train_cfg, world.dir + "/run", 2) == 0);
  REQUIRE(fs::exists(world.dir + "/run/model.vdm"));

  const auto log = body_of(world.dir + "/run/train_log.tsv");
  REQUIRE(log.size() >= 2);
  CHECK(log[0] == "step\tloss\tlr\tclamped\telapsed_ms");
  CHECK(log.back().rfind("3\t", 0) == 0);

  const Checkpoint ckpt = load_checkpoint(world.dir + "/run/model.vdm");
  CHECK(ckpt.arrays.at("optim.step").data == std::vector<double>{3.0});
  CHECK(ckpt.config_echo.find("derived.residues = ACD") != std::string::npos);
  CHECK(ckpt.config_echo.find("derived.locations = L0,L1,L2") != std::string::npos);
  CHECK(ckpt.config_echo.find("trainer.rng_state = ") != std::string::npos);

  // evaluate the held-out window without oracles
  const std::string eval_cfg = write_file(
      world.dir, "eval.cfg",
      world.data_block() + "data.train_cutoff = 5\neval.checkpoint = " + world.dir +
          "/run/model.vdm\neval.revnll = 0\neval.tau_list = 0.50,1\n");
  REQUIRE(run("eval", eval_cfg, world.dir + "/eval", 2) == 0);
  const auto metrics = body_of(world.dir + "/eval/metrics.csv");
  REQUIRE(metrics.size() > 1);
  CHECK(metrics[0] == "tau,location,time,nll,revnll_mean,revnll_lo,revnll_hi");
  // tau strings echo the config verbatim, in order, and revNLL columns are empty
  CHECK(metrics[1].rfind("0.50,", 0) == 0);
  CHECK(metrics[1].substr(metrics[1].size() - 3) == ",,,");
  CHECK(metrics.back().rfind("1,", 0) == 0);
  const std::size_t n_cells = (metrics.size() - 1) / 2;
  CHECK(n_cells * 2 + 1 == metrics.size());  // same cells under each tau

  // sampled generation, sorted by log probability
  const std::string gen_cfg = write_file(
      world.dir, "gen.cfg",
      "generate.checkpoint = " + world.dir + "/run/model.vdm\n" +
          "generate.count = 6\ngenerate.max_len = 6\ngenerate.location = L1\n"
          "generate.time = 2\n");
  REQUIRE(run("generate", gen_cfg, world.dir + "/gen", 7) == 0);
  const auto fasta = body_of(world.dir + "/gen/generated.fasta");
  REQUIRE(fasta.size() == 12);
  double prev = 1e300;
  for (std::size_t i = 0; i < fasta.size(); i += 2) {
    CHECK(fasta[i][0] == '>');
    std::istringstream hdr(fasta[i].substr(1));
    std::string rank, lp, loc, t;
    std::getline(hdr, rank, '|');
    std::getline(hdr, lp, '|');
    std::getline(hdr, loc, '|');
    std::getline(hdr, t, '|');
    CHECK(rank == std::to_string(i / 2 + 1));
    CHECK(loc == "L1");
    CHECK(t == "2");
    const double v = std::stod(lp);
    CHECK(v <= prev);
    prev = v;
    for (char c : fasta[i + 1]) CHECK(std::string("ACD").find(c) != std::string::npos);
  }

  // beam generation truncated to top-k
  const std::string beam_cfg = write_file(
      world.dir, "beam.cfg",
      "generate.checkpoint = " + world.dir + "/run/model.vdm\n" +
          "generate.mode = beam\ngenerate.beam_width = 4\ngenerate.topk = 2\n"
          "generate.max_len = 5\n");
  REQUIRE(run("generate", beam_cfg, world.dir + "/beam", 7) == 0);
  CHECK(body_of(world.dir + "/beam/generated.fasta").size() == 4);

  // analysis with rate recovery against the simulator's ground truth
  const std::string an_cfg = write_file(
      world.dir, "an.cfg",
      world.data_block() + "analyze.checkpoint = " + world.dir + "/run/model.vdm\n" +
          "analyze.true_rates = " + world.true_rates + "\n");
  REQUIRE(run("analyze", an_cfg, world.dir + "/an", 2) == 0);
  const auto rates = body_of(world.dir + "/an/avg_rates.tsv");
  REQUIRE(rates.size() == 4);
  CHECK(rates[0] == "location\tL0\tL1\tL2");
  const auto tree = body_of(world.dir + "/an/spanning_tree.tsv");
  REQUIRE(tree.size() == 3);  // header + 2 edges
  CHECK(tree[0] == "from\tto\tweight");
  const auto recovery = body_of(world.dir + "/an/rate_recovery.tsv");
  REQUIRE(recovery.size() >= 1);
  CHECK(recovery[0].rfind("spearman = ", 0) == 0);
  const double rho = std::stod(recovery[0].substr(11));
  CHECK(rho >= -1.0);
  CHECK(rho <= 1.0);
}

TEST_CASE("rerunning with the same config and seed is byte-identical") {
  SimulatedWorld world("cli_bytes");
  const std::string train_cfg = write_file(
      world.dir, "train.cfg",
      world.data_block() + world.tiny_model_block() + "train.steps = 2\ntrain.batch = 3\n");
  REQUIRE(run("train", train_cfg, world.dir + "/a", 4) == 0);
  REQUIRE(run("train", train_cfg, world.dir + "/b", 4) == 0);
  CHECK(slurp(world.dir + "/a/model.vdm") == slurp(world.dir + "/b/model.vdm"));

  // a different seed changes the checkpoint
  REQUIRE(run("train", train_cfg, world.dir + "/c", 5) == 0);
  CHECK(slurp(world.dir + "/a/model.vdm") != slurp(world.dir + "/c/model.vdm"));

  const std::string eval_cfg = write_file(
      world.dir, "eval.cfg",
      world.data_block() + "data.train_cutoff = 6\neval.checkpoint = " + world.dir +
          "/a/model.vdm\neval.revnll = 0\neval.tau_list = 1.0\n");
  REQUIRE(run("eval", eval_cfg, world.dir + "/e1", 9) == 0);
  REQUIRE(run("eval", eval_cfg, world.dir + "/e2", 9) == 0);
  CHECK(slurp(world.dir + "/e1/metrics.csv") == slurp(world.dir + "/e2/metrics.csv"));

  const std::string gen_cfg = write_file(
      world.dir, "gen.cfg", "generate.checkpoint = " + world.dir +
                                "/a/model.vdm\ngenerate.count = 5\ngenerate.max_len = 5\n");
  REQUIRE(run("generate", gen_cfg, world.dir + "/g1", 11) == 0);
  REQUIRE(run("generate", gen_cfg, world.dir + "/g2", 11) == 0);
  CHECK(slurp(world.dir + "/g1/generated.fasta") == slurp(world.dir + "/g2/generated.fasta"));
  REQUIRE(run("generate", gen_cfg, world.dir + "/g3", 12) == 0);
  CHECK(slurp(world.dir + "/g1/generated.fasta") != slurp(world.dir + "/g3/generated.fasta"));
}

TEST_CASE("overrides beat the config file and steps=0 snapshots initialization") {
  SimulatedWorld world("cli_override");
  const std::string train_cfg = write_file(
      world.dir, "train.cfg",
      world.data_block() + world.tiny_model_block() + "train.steps = 5\n");
  REQUIRE(run("train", train_cfg, world.dir + "/zero", 2, {"train.steps=0"}) == 0);
  const Checkpoint ckpt = load_checkpoint(world.dir + "/zero/model.vdm");
  CHECK(ckpt.arrays.at("optim.step").data == std::vector<double>{0.0});
  CHECK(ckpt.config_echo.find("train.steps = 0") != std::string::npos);
}

TEST_CASE("resumed split training reproduces the one-shot checkpoint byte for byte") {
  SimulatedWorld world("cli_resume");
  const std::string base =
      world.data_block() + world.tiny_model_block() +
      "train.steps = 4\ntrain.batch = 3\ntrain.lr = 0.02\n";

  const std::string full_cfg = write_file(world.dir, "full.cfg", base);
  REQUIRE(run("train", full_cfg, world.dir + "/full", 3) == 0);

  const std::string half_cfg = write_file(world.dir, "half.cfg", base + "train.stop_at = 2\n");
  REQUIRE(run("train", half_cfg, world.dir + "/split", 3) == 0);
  const std::string resume_cfg = write_file(
      world.dir, "resume.cfg",
      base + "train.resume = " + world.dir + "/split/model.vdm\n");
  REQUIRE(run("train", resume_cfg, world.dir + "/split2", 3) == 0);

  const Checkpoint full = load_checkpoint(world.dir + "/full/model.vdm");
  const Checkpoint split = load_checkpoint(world.dir + "/split2/model.vdm");
  CHECK(full.arrays.at("optim.step").data == std::vector<double>{4.0});
  CHECK(split.arrays.at("optim.step").data == std::vector<double>{4.0});
  REQUIRE(full.arrays.size() == split.arrays.size());
  for (const auto& [name, tensor] : full.arrays) {
    if (name == "optim.step") continue;
    CHECK(tensor.data == split.arrays.at(name).data);
  }
}

TEST_CASE("eval trains per-location oracle ensembles when asked") {
  SimulatedWorld world("cli_oracle");
  const std::string train_cfg = write_file(
      world.dir, "train.cfg",
      world.data_block() + world.tiny_model_block() + "train.steps = 2\ntrain.batch = 3\n");
  REQUIRE(run("train", train_cfg, world.dir + "/run", 2) == 0);

  const std::string eval_cfg = write_file(
      world.dir, "eval.cfg",
      world.data_block() + "data.train_cutoff = 7\neval.checkpoint = " + world.dir +
          "/run/model.vdm\n"
          "eval.tau_list = 1.0\neval.min_count = 3\n"
          "eval.oracle_count = 2\neval.oracle_steps = 2\neval.oracle_batch = 4\n"
          "eval.oracle_embed_dim = 4\neval.oracle_hidden_dim = 8\neval.oracle_layers = 1\n"
          "eval.oracle_window = 4\neval.samples_per_cell = 4\neval.max_len = 6\n"
          "eval.coverage_widths = 2,4\n");
  REQUIRE(run("eval", eval_cfg, world.dir + "/eval", 2) == 0);

  const auto metrics = body_of(world.dir + "/eval/metrics.csv");
  REQUIRE(metrics.size() > 1);
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    // every data row carries populated revNLL columns with lo <= mean <= hi
    std::vector<std::string> cols;
    std::istringstream row(metrics[i]);
    std::string cell;
    while (std::getline(row, cell, ',')) cols.push_back(cell);
    REQUIRE(cols.size() == 7);
    const double mean = std::stod(cols[4]);
    const double lo = std::stod(cols[5]);
    const double hi = std::stod(cols[6]);
    CHECK(lo <= mean);
    CHECK(mean <= hi);
  }

  const auto cov = body_of(world.dir + "/eval/coverage.csv");
  REQUIRE(cov.size() > 1);
  CHECK(cov[0] == "width,location,time,coverage");
  int medians = 0;
  for (std::size_t i = 1; i < cov.size(); ++i) {
    if (cov[i].find(",all,all,") != std::string::npos) ++medians;
    const double v = std::stod(cov[i].substr(cov[i].rfind(',') + 1));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(medians == 2);  // one summary row per width
}

TEST_CASE("an empty test window leaves a header-only metrics file") {
  SimulatedWorld world("cli_empty");
  const std::string train_cfg = write_file(
      world.dir, "train.cfg",
      world.data_block() + world.tiny_model_block() + "train.steps = 1\n");
  REQUIRE(run("train", train_cfg, world.dir + "/run", 2) == 0);
  const std::string eval_cfg = write_file(
      world.dir, "eval.cfg",
      world.data_block() + "data.train_cutoff = 1000\neval.checkpoint = " + world.dir +
          "/run/model.vdm\n");
  REQUIRE(run("eval", eval_cfg, world.dir + "/eval", 2) == 0);
  const auto metrics = body_of(world.dir + "/eval/metrics.csv");
  REQUIRE(metrics.size() == 1);
  CHECK(metrics[0] == "tau,location,time,nll,revnll_mean,revnll_lo,revnll_hi");
}

TEST_CASE("generate accepts a location by name or by index") {
  SimulatedWorld world("cli_locname");
  const std::string train_cfg = write_file(
      world.dir, "train.cfg",
      world.data_block() + world.tiny_model_block() + "train.steps = 1\n");
  REQUIRE(run("train", train_cfg, world.dir + "/run", 2) == 0);
  const std::string base = "generate.checkpoint = " + world.dir +
                           "/run/model.vdm\ngenerate.count = 3\ngenerate.max_len = 4\n";
  const std::string by_name = write_file(world.dir, "by_name.cfg",
                                         base + "generate.location = L2\n");
  const std::string by_index = write_file(world.dir, "by_index.cfg",
                                          base + "generate.location = 2\n");
  REQUIRE(run("generate", by_name, world.dir + "/n", 6) == 0);
  REQUIRE(run("generate", by_index, world.dir + "/i", 6) == 0);
  // identical draws; only the echoed config line differs
  CHECK(body_of(world.dir + "/n/generated.fasta") == body_of(world.dir + "/i/generated.fasta"));

  const std::string bad = write_file(world.dir, "bad_loc.cfg",
                                     base + "generate.location = Atlantis\n");
  CHECK(run("generate", bad, world.dir + "/bad", 6) == 2);
}

TEST_CASE("analyze works from a subset file and rejects hierarchical checkpoints") {
  SimulatedWorld world("cli_analyze", "sim.num_groups = 2\n");

  // flat model for the subset path
  const std::string flat_cfg = write_file(
      world.dir, "flat.cfg",
      world.data_block() + world.tiny_model_block() + "train.steps = 1\n");
  REQUIRE(run("train", flat_cfg, world.dir + "/flat", 2) == 0);

  const std::string subset = write_file(world.dir, "subset.txt",
                                        "# comment to skip\n"
                                        ">fasta header to skip\n"
                                        "ACDAC\n"
                                        "DDACA\n");
  const std::string sub_cfg = write_file(
      world.dir, "sub.cfg", "analyze.checkpoint = " + world.dir +
                                "/flat/model.vdm\nanalyze.subset = " + subset + "\n");
  REQUIRE(run("analyze", sub_cfg, world.dir + "/sub", 2) == 0);
  CHECK(fs::exists(world.dir + "/sub/avg_rates.tsv"));
  CHECK(fs::exists(world.dir + "/sub/spanning_tree.tsv"));
  CHECK_FALSE(fs::exists(world.dir + "/sub/rate_recovery.tsv"));

  // hierarchical model: trainable, but analyze refuses it
  const std::string hier_cfg = write_file(
      world.dir, "hier.cfg",
      world.data_block() + world.tiny_model_block() +
          "model.hierarchical = 1\nmodel.groups = labels\ntrain.steps = 1\n");
  REQUIRE(run("train", hier_cfg, world.dir + "/hier", 2) == 0);
  const Checkpoint hier = load_checkpoint(world.dir + "/hier/model.vdm");
  CHECK(hier.config_echo.find("derived.location_groups = 0,0,1") != std::string::npos);
  const std::string an_cfg = write_file(
      world.dir, "an.cfg", world.data_block() + "analyze.checkpoint = " + world.dir +
                               "/hier/model.vdm\n");
  CHECK(run("analyze", an_cfg, world.dir + "/an", 2) == 2);
}

TEST_CASE("corpus caches are created, reused, and validated") {
  SimulatedWorld world("cli_cache");
  const std::string cache = world.dir + "/corpus.vdc";
  const std::string train_cfg = write_file(
      world.dir, "train.cfg",
      world.data_block() + "data.cache = " + cache + "\n" + world.tiny_model_block() +
          "train.steps = 1\n");
  REQUIRE(run("train", train_cfg, world.dir + "/a", 2) == 0);
  REQUIRE(fs::exists(cache));

  // second run consumes the cache and lands on the same bytes
  REQUIRE(run("train", train_cfg, world.dir + "/b", 2) == 0);
  CHECK(slurp(world.dir + "/a/model.vdm") == slurp(world.dir + "/b/model.vdm"));

  // a corrupt cache is a data error
  write_file(world.dir, "corpus.vdc", "JUNKJUNKJUNK");
  CHECK(run("train", train_cfg, world.dir + "/c", 2) == 3);
}

TEST_CASE("failure modes map to the documented exit codes") {
  const std::string dir = tmp_dir("cli_exits");

  // unknown command
  CHECK(run("frobnicate", "", dir, 1) == 2);

  // missing config file
  CHECK(run("simulate", dir + "/absent.cfg", dir, 1) == 2);

  // malformed config line
  const std::string bad_cfg = write_file(dir, "bad.cfg", "sim.locations\n");
  CHECK(run("simulate", bad_cfg, dir, 1) == 2);

  // train without data keys
  const std::string no_data = write_file(dir, "nodata.cfg", "train.steps = 1\n");
  CHECK(run("train", no_data, dir + "/t", 1) == 2);

  // missing samples file
  const std::string gone = write_file(dir, "gone.cfg",
                                      "data.samples = /nonexistent/samples.tsv\n"
                                      "data.locations = /nonexistent/locations.tsv\n");
  CHECK(run("train", gone, dir + "/t2", 1) == 3);

  // eval against a missing checkpoint
  const std::string no_ckpt = write_file(dir, "nockpt.cfg",
                                         "eval.checkpoint = /nonexistent/model.vdm\n"
                                         "data.samples = x\ndata.locations = y\n");
  CHECK(run("eval", no_ckpt, dir + "/t3", 1) == 3);

  // bad enum values
  const std::string bad_mode = write_file(dir, "badmode.cfg",
                                          "sim.founder = elsewhere\n");
  CHECK(run("simulate", bad_mode, dir + "/t4", 1) == 2);
}

TEST_CASE("the rescale guard decides whether extreme horizons overflow") {
  SimulatedWorld world("cli_rescale");
  const std::string raw_cfg = write_file(
      world.dir, "raw.cfg",
      world.data_block() + world.tiny_model_block() +
          "model.rescale = 0\ntrain.steps = 1\n");
  REQUIRE(run("train", raw_cfg, world.dir + "/raw", 2) == 0);
  const std::string scaled_cfg = write_file(
      world.dir, "scaled.cfg",
      world.data_block() + world.tiny_model_block() + "train.steps = 1\n");
  REQUIRE(run("train", scaled_cfg, world.dir + "/scaled", 2) == 0);

  const std::string far = "generate.count = 2\ngenerate.max_len = 4\ngenerate.time = 200000\n";
  const std::string raw_gen = write_file(
      world.dir, "raw_gen.cfg",
      "generate.checkpoint = " + world.dir + "/raw/model.vdm\n" + far);
  CHECK(run("generate", raw_gen, world.dir + "/raw_gen", 3) == 4);

  const std::string scaled_gen = write_file(
      world.dir, "scaled_gen.cfg",
      "generate.checkpoint = " + world.dir + "/scaled/model.vdm\n" + far);
  CHECK(run("generate", scaled_gen, world.dir + "/scaled_gen", 3) == 0);
  CHECK(fs::exists(world.dir + "/scaled_gen/generated.fasta"));
}
