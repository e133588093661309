#include "fuselm/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include "fuselm/binary_io.hpp"
#include "fuselm/checkpoint.hpp"
#include "fuselm/corpus.hpp"
#include "fuselm/error.hpp"
#include "fuselm/evaluator.hpp"
#include "fuselm/manifest.hpp"
#include "fuselm/providers.hpp"
#include "fuselm/store.hpp"
#include "fuselm/trainer.hpp"

namespace fuselm::cli {
namespace fs = std::filesystem;
namespace {

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const InputError*>(&e)) return "input";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const LookupError*>(&e)) return "lookup";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  return "runtime";
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw ConfigError(std::string("bad ") + what + " list '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

std::string default_seed() {
  if (const char* s = std::getenv("FUSELM_SEED"); s != nullptr && *s != '\0') return s;
  return "1";
}

std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    if (text.empty() || text[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("seed must be a non-negative integer, got '" + text + "'");
  }
}

// Effective value of every option of a subcommand, for the manifest.
std::vector<std::pair<std::string, std::string>> effective_config(const CLI::App* app) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto* opt : app->get_options()) {
    const auto name = opt->get_name(false, true);
    if (name.empty() || name.find("help") != std::string::npos) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
      if (opt->get_expected_max() == 0 && res.empty()) value = "true";
    } else {
      value = opt->get_default_str();
      if (opt->get_expected_max() == 0 && value.empty()) value = "false";
    }
    out.emplace_back(name.substr(name.find_first_not_of('-')), value);
  }
  return out;
}

struct ManifestScope {
  RunManifest manifest;
  fs::path path;

  ManifestScope(const CLI::App* app, std::uint64_t seed) {
    manifest.command = app->get_name();
    manifest.config = effective_config(app);
    manifest.seed = seed;
    manifest.started = utc_timestamp();
  }
  void input(const fs::path& p) {
    if (!p.empty()) manifest.add_input(p);
  }
  void output(const fs::path& p) {
    if (!p.empty()) manifest.outputs.push_back(p.string());
  }
  void finish() {
    if (path.empty()) return;
    manifest.finished = utc_timestamp();
    manifest.write(path);
  }
};

fs::path manifest_for(const fs::path& output) {
  auto p = output;
  p += ".manifest.json";
  return p;
}

std::string store_path(const std::string& spec) {
  return spec.starts_with("store:") ? spec.substr(6) : std::string{};
}

// ---------------------------------------------------------------- train-bpe

struct BpeArgs {
  std::string corpus;
  std::string out;
  std::size_t vocab_size = Vocab::kDefaultSize;
  std::optional<std::size_t> limit;
};

void add_bpe(CLI::App& app, BpeArgs& a) {
  auto* sub = app.add_subcommand("train-bpe", "Learn a BPE vocabulary from a sentence-per-line corpus");
  sub->add_option("--corpus", a.corpus, "Training corpus (UTF-8, one sentence per line)")->required();
  sub->add_option("--out", a.out, "Vocabulary file to write")->required();
  sub->add_option("--vocab-size", a.vocab_size, "Total tokens including specials");
  sub->add_option("--limit", a.limit, "Use only the first N sentences");
}

int run_bpe(const CLI::App* sub, const BpeArgs& a, std::ostream& out) {
  ManifestScope m(sub, 0);
  m.path = manifest_for(a.out);
  const auto corpus = load_corpus(a.corpus, a.limit);
  m.input(a.corpus);
  const auto vocab = Vocab::train(corpus.sentences, a.vocab_size);
  vocab.save(a.out);
  m.output(a.out);
  m.finish();
  out << "vocab: " << vocab.size() << " tokens (" << vocab.alphabet_size() << " base, " << vocab.merges().size()
      << " merges) -> " << a.out << '\n';
  return kExitOk;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string train;
  std::string dev;
  std::string vocab;
  std::string model = "lstm";
  std::string fusion = "late-concat";
  std::string provider = "zero";
  std::string dev_provider;
  std::string crop = "none";
  std::string dropout = "none";
  std::size_t epochs = 1;
  double lr = 1e-6;
  double clip_norm = 0.0;
  std::string seed = default_seed();
  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 256;
  std::size_t ffn_width = 768;
  std::size_t zero_dim = 768;
  std::optional<std::size_t> limit;
  std::size_t eval_every = 1;
  bool no_shuffle = false;
  bool no_timing = false;
  bool no_dev_dropout = false;
  std::size_t threads = 1;
  std::string checkpoint;
  std::string metrics;
  std::string resume;
};

void add_train_options(CLI::App* sub, TrainArgs& a, bool outputs) {
  sub->add_option("--train", a.train, "Training corpus")->required();
  sub->add_option("--dev", a.dev, "Dev corpus for periodic evaluation");
  sub->add_option("--vocab", a.vocab, "Vocabulary file from train-bpe")->required();
  sub->add_option("--model", a.model, "Network: lstm | ffn (artefact-only)")
      ->check(CLI::IsMember({"lstm", "ffn"}));
  sub->add_option("--fusion", a.fusion, "none|early-h0|early-c0|early-both|late-concat|late-add|late-mul")
      ->check(CLI::IsMember({"none", "early-h0", "early-c0", "early-both", "late-concat", "late-add", "late-mul"}));
  sub->add_option("--provider", a.provider, "Artefact source: zero | bow | tfidf | store:<path>");
  sub->add_option("--dev-provider", a.dev_provider, "Artefact source for the dev corpus (default: --provider)");
  sub->add_option("--crop", a.crop, "none | right:<pct> | left:<pct>");
  sub->add_option("--dropout", a.dropout,
                  "Artefact dropout: none | wean-off[:N] | reverse[:N] | const:<p> | <epoch>:<p>,...");
  sub->add_option("--epochs", a.epochs, "Number of epochs");
  sub->add_option("--lr", a.lr, "Adam learning rate");
  sub->add_option("--clip-norm", a.clip_norm, "Clip gradients to this global L2 norm (0 = off)");
  sub->add_option("--seed", a.seed, "Seed (falls back to FUSELM_SEED)");
  sub->add_option("--embed-dim", a.embed_dim, "Embedding width");
  sub->add_option("--hidden-dim", a.hidden_dim, "LSTM hidden width");
  sub->add_option("--ffn-width", a.ffn_width, "Width of the artefact-only network");
  sub->add_option("--zero-dim", a.zero_dim, "Dimension of the zero provider");
  sub->add_option("--limit", a.limit, "Use only the first N training sentences");
  sub->add_option("--eval-every", a.eval_every, "Dev evaluation period in epochs");
  sub->add_flag("--no-shuffle", a.no_shuffle, "Keep file order every epoch");
  sub->add_flag("--no-timing", a.no_timing, "Report 0 seconds so metrics are byte-reproducible");
  sub->add_flag("--no-dev-dropout", a.no_dev_dropout, "Serve dev artefacts without the schedule's dropout");
  sub->add_option("--threads", a.threads, "Threads for dev evaluation");
  if (outputs) {
    sub->add_option("--checkpoint", a.checkpoint, "Checkpoint file (rewritten after every epoch)")->required();
    sub->add_option("--metrics", a.metrics, "Metrics file (JSON lines)")->required();
    sub->add_option("--resume", a.resume, "Continue from this checkpoint");
  }
}

struct TrainSetup {
  Vocab vocab;
  Corpus train;
  std::optional<Corpus> dev;
  std::unique_ptr<ArtefactProvider> provider;
  std::unique_ptr<ArtefactProvider> dev_provider;
  TrainConfig config;
};

TrainSetup prepare_training(const TrainArgs& a, ManifestScope& m) {
  TrainSetup s;
  s.vocab = Vocab::load(a.vocab);
  s.train = load_corpus(a.train, std::nullopt, Split::Train);
  m.input(a.vocab);
  m.input(a.train);
  if (!a.dev.empty()) {
    s.dev = load_corpus(a.dev, std::nullopt, Split::Dev);
    m.input(a.dev);
  }
  ProviderOptions popts;
  popts.zero_dim = a.zero_dim;
  popts.idf_corpus = &s.train;
  s.provider = make_provider(a.provider, s.vocab, popts);
  m.input(store_path(a.provider));
  if (!a.dev_provider.empty()) {
    s.dev_provider = make_provider(a.dev_provider, s.vocab, popts);
    m.input(store_path(a.dev_provider));
  }

  auto& c = s.config;
  c.model.type = a.model == "ffn" ? ModelType::Ffn : ModelType::Lstm;
  c.model.vocab_size = s.vocab.size();
  c.model.embed_dim = a.embed_dim;
  c.model.hidden_dim = a.hidden_dim;
  c.model.ffn_width = a.ffn_width;
  c.model.artefact_dim = s.provider->dim();
  c.model.mode = parse_fusion_mode(a.fusion);
  c.model.seed = parse_seed(a.seed);
  c.epochs = a.epochs;
  c.adam.lr = a.lr;
  c.adam.clip_norm = a.clip_norm;
  c.crop = CropSpec::parse(a.crop);
  c.dropout = DropoutSchedule::parse(a.dropout);
  c.limit = a.limit;
  c.eval_every = a.eval_every;
  c.shuffle = !a.no_shuffle;
  c.record_time = !a.no_timing;
  c.dev_dropout = !a.no_dev_dropout;
  c.threads = a.threads;
  c.checkpoint_path = a.checkpoint;
  c.metrics_path = a.metrics;
  return s;
}

TrainResult execute_training(TrainSetup& s, const std::string& resume_path, std::ostream& out) {
  TrainInputs inputs{s.train, s.vocab, *s.provider, s.dev ? &*s.dev : nullptr, s.dev_provider.get()};
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);
  out << "model: " << to_string(s.config.model.type) << ", fusion " << to_string(s.config.model.mode) << ", "
      << Model::init(s.config.model).num_parameters() << " parameters, artefact dim "
      << s.config.model.artefact_dim << '\n';
  return train(s.config, inputs, std::move(resume), [&](const MetricsRecord& r) {
    out << "epoch " << r.epoch << ' ' << r.split << " ppl " << std::setprecision(6) << r.ppl << " (p=" << r.dropout_p
        << ")\n";
  });
}

int run_train(const CLI::App* sub, const TrainArgs& a, std::ostream& out) {
  ManifestScope m(sub, parse_seed(a.seed));
  m.path = manifest_for(a.checkpoint);
  m.input(a.resume);
  auto setup = prepare_training(a, m);
  execute_training(setup, a.resume, out);
  m.output(a.checkpoint);
  m.output(a.metrics);
  m.finish();
  return kExitOk;
}

// ------------------------------------------------------------- wean / sweep

struct WeanArgs {
  TrainArgs train;
  std::string preset = "wean-off";
  std::size_t period = 15;
};

int run_wean(const CLI::App* sub, WeanArgs a, std::ostream& out) {
  a.train.dropout = a.preset + ":" + std::to_string(a.period);
  return run_train(sub, a.train, out);
}

struct DataSweepArgs {
  TrainArgs train;
  std::string sizes = "1000,3000,10000,30000,100000";
  std::string out_dir;
};

int run_data_sweep(const CLI::App* sub, DataSweepArgs a, std::ostream& out) {
  const auto sizes = parse_list<std::size_t>(a.sizes, "size");
  fs::create_directories(a.out_dir);
  ManifestScope m(sub, parse_seed(a.train.seed));
  m.path = fs::path(a.out_dir) / "manifest.json";
  std::ostringstream csv;
  csv.precision(17);
  csv << "sentences,epochs,dev_ppl,train_ppl\n";
  bool first = true;
  for (const auto n : sizes) {
    auto args = a.train;
    args.limit = n;
    args.checkpoint = (fs::path(a.out_dir) / ("model_" + std::to_string(n) + ".flmc")).string();
    args.metrics = (fs::path(a.out_dir) / ("metrics_" + std::to_string(n) + ".jsonl")).string();
    ManifestScope inner(sub, m.manifest.seed);
    auto setup = prepare_training(args, first ? m : inner);
    first = false;
    out << "== " << n << " sentences\n";
    const auto result = execute_training(setup, "", out);
    const auto dev = result.last_dev();
    double train_ppl = 0.0;
    for (const auto& r : result.metrics) {
      if (r.split == "train") train_ppl = r.ppl;
    }
    csv << n << ',' << result.epochs_completed << ',' << (dev ? dev->ppl : 0.0) << ',' << train_ppl << '\n';
    m.output(args.checkpoint);
    m.output(args.metrics);
  }
  const auto summary = fs::path(a.out_dir) / "data_sweep.csv";
  binary::write_file_atomic(summary, csv.str());
  m.output(summary);
  m.finish();
  return kExitOk;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string vocab;
  std::vector<std::string> corpora;
  std::vector<std::string> providers{"zero"};
  std::string idf_corpus;
  std::string crop = "none";
  std::size_t threads = 1;
  std::optional<std::size_t> limit;
  std::string out;
};

void add_eval_inputs(CLI::App* sub, EvalArgs& a, bool many_corpora) {
  sub->add_option("--checkpoint", a.checkpoint, "Trained checkpoint")->required();
  sub->add_option("--vocab", a.vocab, "Vocabulary file")->required();
  if (many_corpora) {
    sub->add_option("--corpus", a.corpora, "Corpus to score (repeat for a cross-domain table)")->required();
    sub->add_option("--provider", a.providers, "Artefact source, once or once per corpus");
  } else {
    sub->add_option("--corpus", a.corpora, "Corpus to score")->required()->expected(1);
    sub->add_option("--provider", a.providers, "Artefact source")->expected(1);
  }
  sub->add_option("--idf-corpus", a.idf_corpus, "Training corpus for the tfidf provider's idf fit");
  sub->add_option("--threads", a.threads, "Evaluation threads");
  sub->add_option("--limit", a.limit, "Score only the first N sentences");
}

struct EvalContext {
  Vocab vocab;
  Checkpoint ckpt;
  std::optional<Corpus> idf;
};

EvalContext load_eval_context(const EvalArgs& a, ManifestScope& m) {
  EvalContext ctx{Vocab::load(a.vocab), load_checkpoint(a.checkpoint), std::nullopt};
  m.input(a.vocab);
  m.input(a.checkpoint);
  if (!a.idf_corpus.empty()) {
    ctx.idf = load_corpus(a.idf_corpus);
    m.input(a.idf_corpus);
  }
  if (ctx.ckpt.model.config().vocab_size != ctx.vocab.size()) {
    throw ConfigError("checkpoint vocabulary size differs from " + a.vocab);
  }
  return ctx;
}

std::unique_ptr<ArtefactProvider> eval_provider(const EvalContext& ctx, const std::string& spec, ManifestScope& m) {
  ProviderOptions popts;
  popts.zero_dim = ctx.ckpt.model.config().artefact_dim;
  popts.idf_corpus = ctx.idf ? &*ctx.idf : nullptr;
  m.input(store_path(spec));
  return make_provider(spec, ctx.vocab, popts);
}

int run_eval(const CLI::App* sub, const EvalArgs& a, std::ostream& out) {
  if (a.providers.size() != 1 && a.providers.size() != a.corpora.size()) {
    throw ConfigError("give one --provider, or one per --corpus");
  }
  ManifestScope m(sub, 0);
  if (!a.out.empty()) m.path = manifest_for(a.out);
  const auto ctx = load_eval_context(a, m);
  m.manifest.seed = ctx.ckpt.model.config().seed;
  EvalOptions opts;
  opts.crop = CropSpec::parse(a.crop);
  opts.threads = a.threads;
  nlohmann::ordered_json reports = nlohmann::ordered_json::array();
  out << "corpus\tprovider\ttokens\tppl\n";
  for (std::size_t i = 0; i < a.corpora.size(); ++i) {
    const auto corpus = load_corpus(a.corpora[i], a.limit, Split::Eval);
    m.input(a.corpora[i]);
    const auto provider = eval_provider(ctx, a.providers.size() == 1 ? a.providers[0] : a.providers[i], m);
    const auto report = perplexity(ctx.ckpt.model, corpus, ctx.vocab, *provider, opts);
    out << report.corpus << '\t' << report.provider << '\t' << report.tokens << '\t' << std::setprecision(8)
        << report.ppl << '\n';
    reports.push_back(nlohmann::ordered_json::parse(report.to_json()));
  }
  if (!a.out.empty()) {
    const auto doc = reports.size() == 1 ? reports[0] : reports;
    binary::write_file_atomic(a.out, doc.dump(2) + "\n");
    m.output(a.out);
  }
  m.finish();
  return kExitOk;
}

// --------------------------------------------------------------- crop-sweep

struct CropSweepArgs {
  EvalArgs eval;
  std::string side = "right";
  std::string pcts = "0,25,50,75,100";
};

int run_crop_sweep(const CLI::App* sub, const CropSweepArgs& a, std::ostream& out) {
  const auto pcts = parse_list<double>(a.pcts, "percentage");
  std::vector<std::string> sides;
  if (a.side == "both") {
    sides = {"right", "left"};
  } else {
    sides = {a.side};
  }
  ManifestScope m(sub, 0);
  if (!a.eval.out.empty()) m.path = manifest_for(a.eval.out);
  const auto ctx = load_eval_context(a.eval, m);
  m.manifest.seed = ctx.ckpt.model.config().seed;
  const auto corpus = load_corpus(a.eval.corpora.at(0), a.eval.limit, Split::Eval);
  m.input(a.eval.corpora.at(0));
  const auto provider = eval_provider(ctx, a.eval.providers.at(0), m);
  std::ostringstream csv;
  csv.precision(17);
  csv << "side,pct,ppl,nll,tokens\n";
  out << "side\tpct\tppl\n";
  for (const auto& side : sides) {
    for (const double pct : pcts) {
      EvalOptions opts;
      opts.crop = side == "right" ? CropSpec::right(pct / 100.0) : CropSpec::left(pct / 100.0);
      opts.threads = a.eval.threads;
      opts.keep_token_nll = false;
      const auto r = perplexity(ctx.ckpt.model, corpus, ctx.vocab, *provider, opts);
      csv << side << ',' << pct << ',' << r.ppl << ',' << r.mean_nll() << ',' << r.tokens << '\n';
      out << side << '\t' << pct << '\t' << std::setprecision(8) << r.ppl << '\n';
    }
  }
  if (!a.eval.out.empty()) {
    binary::write_file_atomic(a.eval.out, csv.str());
    m.output(a.eval.out);
  }
  m.finish();
  return kExitOk;
}

// ---------------------------------------------------------------- correlate

struct CorrelateArgs {
  EvalArgs eval;
  std::string rt;
};

int run_correlate(const CLI::App* sub, const CorrelateArgs& a, std::ostream& out) {
  ManifestScope m(sub, 0);
  if (!a.eval.out.empty()) m.path = manifest_for(a.eval.out);
  const auto ctx = load_eval_context(a.eval, m);
  m.manifest.seed = ctx.ckpt.model.config().seed;
  const auto story = load_corpus(a.eval.corpora.at(0), a.eval.limit, Split::Eval);
  m.input(a.eval.corpora.at(0));
  const auto provider = eval_provider(ctx, a.eval.providers.at(0), m);
  const auto rts = read_reading_times(a.rt);
  m.input(a.rt);
  const auto result = correlate_reading_times(ctx.ckpt.model, ctx.vocab, *provider, story, rts, CropSpec::parse(a.eval.crop));
  out << "words: " << result.pairs.size() << "\npearson_r: " << std::setprecision(8) << result.r << '\n';
  if (!a.eval.out.empty()) {
    binary::write_file_atomic(a.eval.out, result.to_json() + "\n");
    m.output(a.eval.out);
  }
  m.finish();
  return kExitOk;
}

// --------------------------------------------------------------- similarity

struct SimilarityArgs {
  std::string store;
  std::size_t min_count = 10;
  std::string out;
};

int run_similarity(const CLI::App* sub, const SimilarityArgs& a, std::ostream& out) {
  ManifestScope m(sub, 0);
  if (!a.out.empty()) m.path = manifest_for(a.out);
  const auto store = ArtefactStore::open(a.store);
  m.input(a.store);
  const auto profile = similarity_profile(store, a.min_count);
  const auto csv = profile.to_csv();
  if (a.out.empty()) {
    out << csv;
  } else {
    binary::write_file_atomic(a.out, csv);
    m.output(a.out);
    out << profile.rows.size() << " rows -> " << a.out << '\n';
  }
  m.finish();
  return kExitOk;
}

// ----------------------------------------------------------------- generate

struct GenerateArgs {
  std::string checkpoint;
  std::string vocab;
  std::string provider = "zero";
  std::string idf_corpus;
  std::size_t max_len = 50;
  std::string strategy = "greedy";
  std::size_t count = 1;
  std::string seed = default_seed();
  std::size_t sentence_idx = 0;
  std::string out;
};

int run_generate(const CLI::App* sub, const GenerateArgs& a, std::ostream& out) {
  ManifestScope m(sub, parse_seed(a.seed));
  if (!a.out.empty()) m.path = manifest_for(a.out);
  EvalArgs ea;
  ea.checkpoint = a.checkpoint;
  ea.vocab = a.vocab;
  ea.idf_corpus = a.idf_corpus;
  const auto ctx = load_eval_context(ea, m);
  const auto* params = std::get_if<LMParams>(&ctx.ckpt.model.params());
  if (params == nullptr) throw ConfigError("generation needs an lstm checkpoint");
  const auto provider = eval_provider(ctx, a.provider, m);
  std::mt19937_64 rng(m.manifest.seed);
  const auto strategy = a.strategy == "sample" ? DecodeStrategy::Sample : DecodeStrategy::Greedy;
  std::string text;
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto ids = generate(*params, *provider, a.max_len, rng, strategy, a.sentence_idx + i);
    text += ctx.vocab.decode(ids) + "\n";
  }
  out << text;
  if (!a.out.empty()) {
    binary::write_file_atomic(a.out, text);
    m.output(a.out);
  }
  m.finish();
  return kExitOk;
}

// ------------------------------------------------------------ inspect-store

struct InspectArgs {
  std::string store;
  std::size_t records = 0;
};

int run_inspect(const InspectArgs& a, std::ostream& out) {
  const auto store = ArtefactStore::open(a.store);
  const auto& h = store.header();
  out << "store: " << a.store << "\nkind: " << to_string(h.kind) << " (" << static_cast<int>(h.kind)
      << ")\ndim: " << h.dim << "\ncrop: " << h.crop.str() << "\nrecords: " << h.record_count
      << "\nsentences: " << store.num_sentences() << '\n';
  for (std::size_t i = 0; i < std::min(a.records, store.size()); ++i) {
    const auto v = store.values_at(i);
    out << store.keys()[i].sentence_idx << '\t' << store.keys()[i].prefix_len;
    for (std::size_t k = 0; k < std::min<std::size_t>(v.size(), 4); ++k) out << '\t' << v[k];
    out << (v.size() > 4 ? "\t...\n" : "\n");
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fuselm: LSTM language models fused with per-prefix artefact vectors", "fuselm"};
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print help for all subcommands and exit");
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags override it");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  BpeArgs bpe;
  add_bpe(app, bpe);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a fusion LSTM or an artefact-only network");
  add_train_options(train_cmd, train_args, true);

  WeanArgs wean;
  auto* wean_cmd = app.add_subcommand("wean", "Train under a wean-off (or reversed) artefact dropout schedule");
  add_train_options(wean_cmd, wean.train, true);
  wean_cmd->add_option("--preset", wean.preset, "wean-off | reverse")->check(CLI::IsMember({"wean-off", "reverse"}));
  wean_cmd->add_option("--period", wean.period, "Epochs per dropout level");

  DataSweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("data-sweep", "Train once per training-set size");
  add_train_options(sweep_cmd, sweep.train, false);
  sweep_cmd->add_option("--sizes", sweep.sizes, "Comma-separated sentence counts");
  sweep_cmd->add_option("--out-dir", sweep.out_dir, "Directory for checkpoints, metrics and the summary")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Subword perplexity of a checkpoint on one or more corpora");
  add_eval_inputs(eval_cmd, eval, true);
  eval_cmd->add_option("--crop", eval.crop, "none | right:<pct> | left:<pct>");
  eval_cmd->add_option("--out", eval.out, "JSON report");

  CropSweepArgs crop;
  auto* crop_cmd = app.add_subcommand("crop-sweep", "Evaluate a checkpoint over a grid of artefact crops");
  add_eval_inputs(crop_cmd, crop.eval, false);
  crop_cmd->add_option("--side", crop.side, "right | left | both")->check(CLI::IsMember({"right", "left", "both"}));
  crop_cmd->add_option("--pcts", crop.pcts, "Comma-separated crop percentages");
  crop_cmd->add_option("--out", crop.eval.out, "CSV table");

  CorrelateArgs corr;
  auto* corr_cmd = app.add_subcommand("correlate", "Correlate word surprisal with reading times");
  add_eval_inputs(corr_cmd, corr.eval, false);
  corr_cmd->add_option("--crop", corr.eval.crop, "none | right:<pct> | left:<pct>");
  corr_cmd->add_option("--rt", corr.rt, "Reading times (TSV: word, mean_rt_ms)")->required();
  corr_cmd->add_option("--out", corr.eval.out, "JSON with pearson_r and pairs");

  SimilarityArgs sim;
  auto* sim_cmd = app.add_subcommand("similarity", "Cosine similarity profile of a dense-prefix store");
  sim_cmd->add_option("--store", sim.store, "ARTF store")->required();
  sim_cmd->add_option("--min-count", sim.min_count, "Drop prefix lengths seen fewer times");
  sim_cmd->add_option("--out", sim.out, "CSV output (stdout if absent)");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Decode sentences from a trained LSTM");
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "Trained checkpoint")->required();
  gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary file")->required();
  gen_cmd->add_option("--provider", gen.provider, "Artefact source");
  gen_cmd->add_option("--idf-corpus", gen.idf_corpus, "Training corpus for the tfidf provider's idf fit");
  gen_cmd->add_option("--max-len", gen.max_len, "Maximum tokens per sentence");
  gen_cmd->add_option("--strategy", gen.strategy, "greedy | sample")->check(CLI::IsMember({"greedy", "sample"}));
  gen_cmd->add_option("--count", gen.count, "Number of sentences");
  gen_cmd->add_option("--seed", gen.seed, "Sampling seed (falls back to FUSELM_SEED)");
  gen_cmd->add_option("--sentence-idx", gen.sentence_idx, "Store sentence index of the first sample");
  gen_cmd->add_option("--out", gen.out, "Write samples here as well");

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect-store", "Validate an ARTF store and print its header");
  inspect_cmd->add_option("--store", inspect.store, "ARTF store")->required();
  inspect_cmd->add_option("--records", inspect.records, "Also print the first N records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand("train-bpe")) return run_bpe(app.get_subcommand("train-bpe"), bpe, out);
    if (app.got_subcommand(train_cmd)) return run_train(train_cmd, train_args, out);
    if (app.got_subcommand(wean_cmd)) return run_wean(wean_cmd, wean, out);
    if (app.got_subcommand(sweep_cmd)) return run_data_sweep(sweep_cmd, sweep, out);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval_cmd, eval, out);
    if (app.got_subcommand(crop_cmd)) return run_crop_sweep(crop_cmd, crop, out);
    if (app.got_subcommand(corr_cmd)) return run_correlate(corr_cmd, corr, out);
    if (app.got_subcommand(sim_cmd)) return run_similarity(sim_cmd, sim, out);
    if (app.got_subcommand(gen_cmd)) return run_generate(gen_cmd, gen, out);
    if (app.got_subcommand(inspect_cmd)) return run_inspect(inspect, out);
  } catch (const Error& e) {
    err << "fuselm: " << error_kind(e) << " error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "fuselm: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace fuselm::cli
