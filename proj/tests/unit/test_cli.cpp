#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fuselm/checkpoint.hpp"
#include "fuselm/cli.hpp"
#include "fuselm/manifest.hpp"
#include "fuselm/metrics.hpp"
#include "fuselm/store.hpp"
#include "test_support.hpp"

using namespace fuselm;

namespace {

struct Result {
  int rc;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "fuselm");
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  return {rc, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(slurp(p)); }

// Scratch directory with a topic corpus and a trained vocabulary.
struct Workspace {
  testing::TempDir dir{"cli"};
  std::string train, dev, vocab;

  Workspace() {
    train = (dir / "train.txt").string();
    dev = (dir / "dev.txt").string();
    vocab = (dir / "vocab.txt").string();
    testing::write_text(train, testing::join_lines(testing::make_topic_corpus(30, 1).sentences));
    testing::write_text(dev, testing::join_lines(testing::make_topic_corpus(8, 2).sentences));
    const auto r = run({"train-bpe", "--corpus", train, "--out", vocab, "--vocab-size", "40"});
    REQUIRE(r.rc == 0);
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::vector<std::string> train_args(const std::string& tag) const {
    return {"train",          "--train",      train,  "--dev",     dev,   "--vocab", vocab,
            "--provider",     "bow",          "--fusion", "late-concat", "--epochs", "2",
            "--embed-dim",    "8",            "--hidden-dim", "6",   "--lr",    "0.01",
            "--no-timing",    "--checkpoint", path(tag + ".flmc"), "--metrics", path(tag + ".jsonl")};
  }
};

struct ScopedEnv {
  std::string name;
  std::optional<std::string> saved;
  ScopedEnv(std::string n, const char* value) : name(std::move(n)) {
    if (const char* v = std::getenv(name.c_str())) saved = v;
    if (value) ::setenv(name.c_str(), value, 1);
    else ::unsetenv(name.c_str());
  }
  ~ScopedEnv() {
    if (saved) ::setenv(name.c_str(), saved->c_str(), 1);
    else ::unsetenv(name.c_str());
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help matches the golden file") {
    ScopedEnv env("FUSELM_SEED", nullptr);
    const auto r = run({"--help"});
    CHECK(r.rc == 0);
    const std::filesystem::path golden = std::filesystem::path(FUSELM_GOLDEN_DIR) / "help.txt";
    if (std::getenv("FUSELM_UPDATE_GOLDEN")) testing::write_text(golden, r.out);
    CHECK(r.out == slurp(golden));
    for (const char* sub : {"train-bpe", "train", "eval", "crop-sweep", "data-sweep", "wean", "correlate",
                            "similarity", "generate", "inspect-store"}) {
      CHECK(r.out.find(std::string("\n") + sub + "\n") != std::string::npos);
    }
  }

  TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).rc == 2);
    CHECK(run({"frobnicate"}).rc == 2);
    CHECK(run({"train-bpe", "--corpus", "x"}).rc == 2);
    CHECK(run({"train-bpe", "--corpus", "x", "--out", "y", "--bogus"}).rc == 2);
    CHECK(run({"train", "--train", "a", "--vocab", "b", "--checkpoint", "c", "--metrics", "d", "--fusion", "late"}).rc == 2);
    CHECK(run({"--version"}).rc == 0);
  }

  TEST_CASE("runtime errors exit with 1 and name the error kind") {
    testing::TempDir dir("cli-err");
    const auto missing = run({"train-bpe", "--corpus", (dir / "nope.txt").string(), "--out", (dir / "v").string()});
    CHECK(missing.rc == 1);
    CHECK(missing.err.rfind("fuselm: io error:", 0) == 0);
    testing::write_text(dir / "bad.artf", "ARTF garbage");
    const auto bad = run({"inspect-store", "--store", (dir / "bad.artf").string()});
    CHECK(bad.rc == 1);
    CHECK(bad.err.find("format error") != std::string::npos);
  }

  TEST_CASE("train writes checkpoint, metrics and manifest") {
    Workspace ws;
    auto args = ws.train_args("a");
    args.insert(args.end(), {"--seed", "5"});
    const auto r = run(args);
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("epoch 1 dev ppl") != std::string::npos);
    const auto ckpt = load_checkpoint(ws.path("a.flmc"));
    CHECK(ckpt.epochs_completed == 2);
    CHECK(ckpt.model.config().seed == 5);
    CHECK(ckpt.model.config().mode == FusionMode::LateConcat);
    const auto metrics = read_metrics(ws.path("a.jsonl"));
    CHECK(metrics.size() == 4);

    const auto m = read_json(ws.path("a.flmc.manifest.json"));
    CHECK(m["command"] == "train");
    CHECK(m["seed"] == 5);
    CHECK(m["config"]["epochs"] == "2");
    CHECK(m["config"]["fusion"] == "late-concat");
    CHECK(m["config"]["no-timing"] == "true");
    CHECK(m["config"]["no-shuffle"] == "false");
    CHECK(m["config"]["lr"] == "0.01");
    CHECK_FALSE(m["config"].contains("help"));
    CHECK(m["inputs"][ws.train] == sha256_file(ws.train));
    CHECK(m["inputs"][ws.vocab] == sha256_file(ws.vocab));
    CHECK(m["outputs"].size() == 2);
  }

  TEST_CASE("identical invocations reproduce outputs bitwise") {
    Workspace ws;
    REQUIRE(run(ws.train_args("a")).rc == 0);
    REQUIRE(run(ws.train_args("b")).rc == 0);
    CHECK(slurp(ws.path("a.flmc")) == slurp(ws.path("b.flmc")));
    CHECK(slurp(ws.path("a.jsonl")) == slurp(ws.path("b.jsonl")));
  }

  TEST_CASE("FUSELM_SEED is the fallback seed") {
    Workspace ws;
    {
      ScopedEnv env("FUSELM_SEED", "77");
      REQUIRE(run(ws.train_args("env")).rc == 0);
    }
    CHECK(load_checkpoint(ws.path("env.flmc")).model.config().seed == 77);
    CHECK(read_json(ws.path("env.flmc.manifest.json"))["seed"] == 77);
    ScopedEnv env("FUSELM_SEED", "x");
    const auto bad = run(ws.train_args("bad"));
    CHECK(bad.rc == 1);
    CHECK(bad.err.find("config error") != std::string::npos);
  }

  TEST_CASE("config file supplies options and the command line overrides it") {
    Workspace ws;
    testing::write_text(ws.path("run.toml"), "[train]\nhidden-dim = 7\nepochs = 5\n");
    auto args = ws.train_args("cfg");
    args.insert(args.begin(), {"--config", ws.path("run.toml")});
    REQUIRE(run(args).rc == 0);
    const auto ckpt = load_checkpoint(ws.path("cfg.flmc"));
    CHECK(ckpt.model.config().hidden_dim == 6);  // flag wins
    CHECK(ckpt.epochs_completed == 2);
    args.erase(std::find(args.begin(), args.end(), "--hidden-dim"), std::find(args.begin(), args.end(), "--hidden-dim") + 2);
    REQUIRE(run(args).rc == 0);
    CHECK(load_checkpoint(ws.path("cfg.flmc")).model.config().hidden_dim == 7);
    CHECK(read_json(ws.path("cfg.flmc.manifest.json"))["config"]["hidden-dim"] == "7");
  }

  TEST_CASE("untrained model evaluates to perplexity V") {
    Workspace ws;
    const auto vocab = Vocab::load(ws.vocab);
    ModelConfig c;
    c.vocab_size = vocab.size();
    c.embed_dim = 4;
    c.hidden_dim = 3;
    c.artefact_dim = 5;
    c.mode = FusionMode::LateAdd;
    save_checkpoint(ws.path("zero.flmc"), Checkpoint{Model::zeros(c), std::nullopt, 0});
    const auto r = run({"eval", "--checkpoint", ws.path("zero.flmc"), "--vocab", ws.vocab, "--corpus", ws.dev,
                        "--provider", "zero", "--out", ws.path("eval.json")});
    REQUIRE(r.rc == 0);
    const auto j = read_json(ws.path("eval.json"));
    CHECK(double(j["ppl"]) == doctest::Approx(double(vocab.size())).epsilon(1e-12));
    CHECK(j["corpus"] == "dev");
    CHECK(std::filesystem::exists(ws.path("eval.json.manifest.json")));
  }

  TEST_CASE("eval accepts several corpora") {
    Workspace ws;
    REQUIRE(run(ws.train_args("m")).rc == 0);
    const auto r = run({"eval", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--corpus", ws.dev,
                        "--corpus", ws.train, "--provider", "bow", "--out", ws.path("x.json")});
    REQUIRE(r.rc == 0);
    const auto j = read_json(ws.path("x.json"));
    REQUIRE(j.is_array());
    CHECK(j.size() == 2);
    CHECK(run({"eval", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--corpus", ws.dev, "--corpus",
               ws.train, "--provider", "bow", "--provider", "zero", "--provider", "bow"})
              .rc == 1);
  }

  TEST_CASE("crop-sweep boundary rows equal zero and uncropped evals") {
    Workspace ws;
    REQUIRE(run(ws.train_args("m")).rc == 0);
    REQUIRE(run({"crop-sweep", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--corpus", ws.dev,
                 "--provider", "bow", "--side", "both", "--out", ws.path("crop.csv")})
                .rc == 0);
    REQUIRE(run({"eval", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--corpus", ws.dev, "--provider",
                 "zero", "--out", ws.path("zero.json")})
                .rc == 0);
    REQUIRE(run({"eval", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--corpus", ws.dev, "--provider",
                 "bow", "--out", ws.path("full.json")})
                .rc == 0);
    const double zero = read_json(ws.path("zero.json"))["nll"];
    const double full = read_json(ws.path("full.json"))["nll"];
    std::istringstream csv(slurp(ws.path("crop.csv")));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "side,pct,ppl,nll,tokens");
    std::map<std::string, double> nll;
    int rows = 0;
    while (std::getline(csv, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      REQUIRE(f.size() == 5);
      nll[f[0] + f[1]] = std::stod(f[3]);
      ++rows;
    }
    CHECK(rows == 10);
    CHECK(nll["right0"] == doctest::Approx(zero).epsilon(1e-15));
    CHECK(nll["left100"] == doctest::Approx(zero).epsilon(1e-15));
    CHECK(nll["right100"] == doctest::Approx(full).epsilon(1e-15));
    CHECK(nll["left0"] == doctest::Approx(full).epsilon(1e-15));
    CHECK(nll["right50"] != nll["right0"]);
  }

  TEST_CASE("wean and data-sweep") {
    Workspace ws;
    auto wean = ws.train_args("w");
    wean[0] = "wean";
    std::replace(wean.begin(), wean.end(), std::string("2"), std::string("4"));  // --epochs 4
    wean.insert(wean.end(), {"--preset", "reverse", "--period", "1"});
    REQUIRE(run(wean).rc == 0);
    const auto metrics = read_metrics(ws.path("w.jsonl"));
    std::vector<double> ps;
    for (const auto& m : metrics) {
      if (m.split == "train") ps.push_back(m.dropout_p);
    }
    CHECK(ps == std::vector<double>{1.0, 0.75, 0.5, 0.25});

    std::vector<std::string> sweep{"data-sweep", "--train", ws.train, "--dev", ws.dev, "--vocab", ws.vocab,
                                   "--provider", "bow", "--epochs", "1", "--embed-dim", "4", "--hidden-dim", "3",
                                   "--no-timing", "--sizes", "5,10", "--out-dir", ws.path("sweep")};
    REQUIRE(run(sweep).rc == 0);
    const auto csv = slurp(ws.path("sweep/data_sweep.csv"));
    CHECK(csv.rfind("sentences,epochs,dev_ppl,train_ppl\n5,1,", 0) == 0);
    CHECK(csv.find("\n10,1,") != std::string::npos);
    CHECK(std::filesystem::exists(ws.path("sweep/model_10.flmc")));
    CHECK(std::filesystem::exists(ws.path("sweep/metrics_5.jsonl")));
    CHECK(read_json(ws.path("sweep/manifest.json"))["outputs"].size() == 5);
  }

  TEST_CASE("generate, correlate, similarity and inspect-store") {
    Workspace ws;
    REQUIRE(run(ws.train_args("m")).rc == 0);
    const auto g = run({"generate", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--provider", "bow",
                        "--count", "3", "--max-len", "6", "--strategy", "sample", "--seed", "2"});
    REQUIRE(g.rc == 0);
    CHECK(std::count(g.out.begin(), g.out.end(), '\n') == 3);

    testing::write_text(ws.path("story.txt"), "a b c\ne f\n");
    testing::write_text(ws.path("rt.tsv"), "word\tmean_rt_ms\na\t300\nB\t310\nc.\t280\ne\t350\nf\t330\n");
    const auto c = run({"correlate", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--corpus",
                        ws.path("story.txt"), "--provider", "bow", "--rt", ws.path("rt.tsv"), "--out", ws.path("r.json")});
    REQUIRE(c.rc == 0);
    const auto j = read_json(ws.path("r.json"));
    CHECK(j["pairs"].size() == 5);
    CHECK(std::abs(double(j["pearson_r"])) <= 1.0);
    testing::write_text(ws.path("rt_bad.tsv"), "word\tmean_rt_ms\na\t300\nz\t310\n");
    const auto bad = run({"correlate", "--checkpoint", ws.path("m.flmc"), "--vocab", ws.vocab, "--corpus",
                          ws.path("story.txt"), "--rt", ws.path("rt_bad.tsv")});
    CHECK(bad.rc == 1);
    CHECK(bad.err.find("data error") != std::string::npos);

    StoreHeader h;
    h.dim = 2;
    std::vector<StoreRecord> records;
    for (std::uint64_t s = 0; s < 10; ++s) {
      for (std::uint32_t k = 0; k < 3; ++k) records.push_back({{s, k}, {1.0f, float(k)}});
    }
    write_store(ws.path("s.artf"), h, records);
    const auto sim = run({"similarity", "--store", ws.path("s.artf")});
    REQUIRE(sim.rc == 0);
    CHECK(sim.out.rfind("prefix_len,consecutive,to_last,count\n1,", 0) == 0);
    const auto ins = run({"inspect-store", "--store", ws.path("s.artf"), "--records", "2"});
    REQUIRE(ins.rc == 0);
    CHECK(ins.out.find("kind: dense-prefix") != std::string::npos);
    CHECK(ins.out.find("records: 30") != std::string::npos);
    CHECK(ins.out.find("sentences: 10") != std::string::npos);
  }
}
