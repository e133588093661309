#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "fuselm/artefact.hpp"
#include "fuselm/binary_io.hpp"
#include "fuselm/bpe.hpp"
#include "fuselm/cli.hpp"
#include "fuselm/error.hpp"
#include "fuselm/evaluator.hpp"
#include "fuselm/manifest.hpp"
#include "fuselm/store.hpp"

namespace py = pybind11;
using namespace fuselm;

namespace {

StoreKind parse_kind(const std::string& kind) {
  if (kind == "dense-prefix" || kind == "prefix") return StoreKind::DensePrefix;
  if (kind == "dense-full" || kind == "full") return StoreKind::DenseFull;
  if (kind == "dense-full-masked" || kind == "full-masked") return StoreKind::DenseFullMasked;
  throw ConfigError("unknown store kind '" + kind + "'");
}

std::string build_store(const std::string& kind, py::array_t<std::uint64_t> sentence_idx,
                        py::array_t<std::uint32_t> prefix_len,
                        py::array_t<float, py::array::c_style | py::array::forcecast> values, const std::string& crop) {
  if (values.ndim() != 2) throw ConfigError("values must be a 2-d array (records x dim)");
  const auto n = static_cast<std::size_t>(values.shape(0));
  const auto dim = static_cast<std::size_t>(values.shape(1));
  if (static_cast<std::size_t>(sentence_idx.size()) != n || static_cast<std::size_t>(prefix_len.size()) != n) {
    throw ConfigError("sentence_idx, prefix_len and values must have the same number of records");
  }
  StoreHeader header;
  header.kind = parse_kind(kind);
  header.dim = static_cast<std::uint32_t>(dim);
  header.crop = CropSpec::parse(crop);
  std::vector<StoreRecord> records(n);
  const auto s = sentence_idx.unchecked<1>();
  const auto p = prefix_len.unchecked<1>();
  const float* v = values.data();
  for (std::size_t i = 0; i < n; ++i) {
    records[i].key = {s(i), p(i)};
    records[i].values.assign(v + i * dim, v + (i + 1) * dim);
  }
  return encode_store(header, std::move(records));
}

py::array_t<float> store_values(const ArtefactStore& store) {
  py::array_t<float> out({store.size(), store.dim()});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto row = store.values_at(i);
    for (std::size_t k = 0; k < row.size(); ++k) m(i, k) = row[k];
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_fuselm, m) {
  m.doc() = "LSTM language models fused with per-prefix artefact vectors.";
  m.attr("__version__") = std::string(kVersion);

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::class_<Vocab>(m, "Vocab")
      .def_static("train", [](const std::vector<std::string>& corpus, std::size_t size) { return Vocab::train(corpus, size); },
                  py::arg("corpus"), py::arg("vocab_size") = Vocab::kDefaultSize)
      .def_static("load", [](const std::string& path) { return Vocab::load(path); })
      .def_static("parse", &Vocab::parse)
      .def("serialize", &Vocab::serialize)
      .def("save", [](const Vocab& v, const std::string& path) { v.save(path); })
      .def("encode", &Vocab::encode)
      .def("decode", [](const Vocab& v, const std::vector<TokenId>& ids) { return v.decode(ids); })
      .def("token", &Vocab::token)
      .def_property_readonly("tokens", &Vocab::tokens)
      .def_property_readonly("merges", &Vocab::merges)
      .def("__len__", &Vocab::size)
      .def("__eq__", &Vocab::operator==)
      .def_readonly_static("BOS", &Vocab::kBos)
      .def_readonly_static("EOS", &Vocab::kEos)
      .def_readonly_static("UNK", &Vocab::kUnk);

  m.def("split_words", [](const std::string& text) {
    std::vector<std::string> out;
    for (const auto w : split_words(text)) out.emplace_back(w);
    return out;
  }, "Space-led words of a sentence, as used for store prefix lengths.");

  m.def("crop_range", [](std::size_t n, std::size_t t, const std::string& spec) -> py::object {
    const auto r = crop_range(n, t, CropSpec::parse(spec));
    if (r.empty()) return py::none();
    return py::make_tuple(r.first, r.last);
  }, py::arg("sentence_len"), py::arg("predict_pos"), py::arg("crop"),
     "Inclusive 1-indexed visible range, or None when the crop hides everything.");

  m.def("encode_store", [](const std::string& kind, py::array_t<std::uint64_t> s, py::array_t<std::uint32_t> p,
                           py::array_t<float, py::array::c_style | py::array::forcecast> v, const std::string& crop) {
    return py::bytes(build_store(kind, s, p, v, crop));
  }, py::arg("kind"), py::arg("sentence_idx"), py::arg("prefix_len"), py::arg("values"), py::arg("crop") = "none");

  m.def("write_store", [](const std::string& path, const std::string& kind, py::array_t<std::uint64_t> s,
                          py::array_t<std::uint32_t> p, py::array_t<float, py::array::c_style | py::array::forcecast> v,
                          const std::string& crop) {
    binary::write_file_atomic(path, build_store(kind, s, p, v, crop));
  }, py::arg("path"), py::arg("kind"), py::arg("sentence_idx"), py::arg("prefix_len"), py::arg("values"),
     py::arg("crop") = "none");

  py::class_<ArtefactStore>(m, "Store")
      .def_static("open", [](const std::string& path) { return ArtefactStore::open(path); })
      .def_static("parse", [](const py::bytes& data) { return ArtefactStore::parse(std::string(data)); })
      .def_property_readonly("kind", [](const ArtefactStore& s) { return std::string(to_string(s.header().kind)); })
      .def_property_readonly("dim", &ArtefactStore::dim)
      .def_property_readonly("crop", [](const ArtefactStore& s) { return s.header().crop.str(); })
      .def_property_readonly("num_sentences", &ArtefactStore::num_sentences)
      .def("__len__", &ArtefactStore::size)
      .def("keys", [](const ArtefactStore& s) {
        std::vector<std::pair<std::uint64_t, std::uint32_t>> out;
        for (const auto& k : s.keys()) out.emplace_back(k.sentence_idx, k.prefix_len);
        return out;
      })
      .def("values", &store_values)
      .def("lookup", [](const ArtefactStore& s, std::uint64_t idx, std::uint32_t len) { return s.lookup(idx, len).values; });

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> argv{"fuselm"};
    argv.insert(argv.end(), args.begin(), args.end());
    std::ostringstream out, err;
    const int rc = cli::run(argv, out, err);
    return py::make_tuple(rc, out.str(), err.str());
  }, py::arg("args"), "Run a command line in-process; returns (exit_code, stdout, stderr).");
}
