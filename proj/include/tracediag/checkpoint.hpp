#pragma once

// Model checkpoint container (text, tab-separated, version 1).
//
//   tracediag-checkpoint<TAB>1
//   model<TAB>baseline|gcn|hybrid
//   task<TAB>ad|fc
//   dataset<TAB>tracebench|bgl
//   classes<TAB><n>[<TAB>name]...
//   embedding<TAB><d><TAB><source>         (graph models; d = 0 for structure-only)
//   symmetrize<TAB>0|1                     (graph models)
//   mcv_key<TAB>op|op-desc|desc            (baseline)
//   vocab<TAB><count>  followed by <count> escaped key lines (baseline)
//   matrix<TAB><name><TAB><rows><TAB><cols> followed by <rows> lines of <cols> values
//   vector<TAB><name><TAB><len>            followed by one line of <len> values
//   end
//
// Graph blocks are w1 b1 w2 b2 w_out b_out; baseline blocks are w b. Values
// use 17 significant digits, which round-trips IEEE doubles exactly.

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tracediag/common.hpp"
#include "tracediag/models.hpp"
#include "tracediag/training_eval.hpp"

namespace tracediag {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelKind model_kind = ModelKind::Gcn;
  Task task = Task::AnomalyDetection;
  DatasetKind dataset = DatasetKind::TraceBench;
  std::vector<std::string> class_names;
  std::size_t embedding_dim = 0;
  std::string embedding_source;  // "none", "pseudo:<d>" or "file"
  std::optional<GcnModel> gcn;
  std::optional<McvModel> mcv;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void put_values(std::string& out, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += '\t';
    out += fmt17(v[i]);
  }
  out += '\n';
}

inline void put_matrix(std::string& out, const std::string& name, const DenseMatrix& m) {
  out += "matrix\t" + name + '\t' + std::to_string(m.rows()) + '\t' + std::to_string(m.cols()) + '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) put_values(out, m.row(r));
}

inline void put_vector(std::string& out, const std::string& name, const std::vector<double>& v) {
  out += "vector\t" + name + '\t' + std::to_string(v.size()) + '\n';
  put_values(out, v);
}

class CheckpointReader {
 public:
  CheckpointReader(const std::string& content, std::string source) : in_(content), source_(std::move(source)) {}

  std::vector<std::string> fields() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return split(line, '\t');
  }

  std::vector<std::string> expect(const std::string& tag, std::size_t min_fields) {
    auto f = fields();
    if (f.empty() || f[0] != tag || f.size() < min_fields) fail("expected '" + tag + "'");
    return f;
  }

  std::size_t count(const std::string& s) {
    auto v = parse_int64(s);
    if (!v || *v < 0) fail("bad count '" + s + "'");
    return static_cast<std::size_t>(*v);
  }

  std::vector<double> values(std::size_t n) {
    auto f = fields();
    if (n == 0) {
      if (!(f.size() == 1 && f[0].empty())) fail("expected an empty value line");
      return {};
    }
    if (f.size() != n) fail("expected " + std::to_string(n) + " values");
    std::vector<double> out;
    out.reserve(n);
    for (const auto& s : f) {
      auto v = parse_double(s);
      if (!v) fail("bad value '" + s + "'");
      out.push_back(*v);
    }
    return out;
  }

  DenseMatrix matrix(const std::string& name) {
    auto f = expect("matrix", 4);
    if (f[1] != name) fail("expected matrix " + name);
    const auto rows = count(f[2]), cols = count(f[3]);
    std::vector<double> data;
    data.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      auto v = values(cols);
      data.insert(data.end(), v.begin(), v.end());
    }
    return DenseMatrix(rows, cols, std::move(data));
  }

  std::vector<double> vector(const std::string& name) {
    auto f = expect("vector", 3);
    if (f[1] != name) fail("expected vector " + name);
    return values(count(f[2]));
  }

  [[noreturn]] void fail(const std::string& what) const { throw SchemaError(source_, line_no_, "checkpoint: " + what); }

 private:
  std::istringstream in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out = "tracediag-checkpoint\t" + std::to_string(kCheckpointVersion) + '\n';
  out += "model\t" + to_string(c.model_kind) + '\n';
  out += "task\t" + to_string(c.task) + '\n';
  out += "dataset\t" + to_string(c.dataset) + '\n';
  out += "classes\t" + std::to_string(c.class_names.size());
  for (const auto& n : c.class_names) out += '\t' + tsv_escape(n);
  out += '\n';
  if (c.model_kind == ModelKind::Baseline) {
    if (!c.mcv) throw ContractError("baseline checkpoint without model");
    out += "mcv_key\t" + to_string(c.mcv->vocab.key_mode) + '\n';
    out += "vocab\t" + std::to_string(c.mcv->vocab.keys.size()) + '\n';
    for (const auto& k : c.mcv->vocab.keys) out += tsv_escape(k) + '\n';
    detail::put_matrix(out, "w", c.mcv->linear.w);
    detail::put_vector(out, "b", c.mcv->linear.b);
  } else {
    if (!c.gcn) throw ContractError("graph checkpoint without model");
    out += "embedding\t" + std::to_string(c.embedding_dim) + '\t' + tsv_escape(c.embedding_source) + '\n';
    out += std::string("symmetrize\t") + (c.gcn->symmetrize ? "1" : "0") + '\n';
    detail::put_matrix(out, "w1", c.gcn->w1);
    detail::put_vector(out, "b1", c.gcn->b1);
    detail::put_matrix(out, "w2", c.gcn->w2);
    detail::put_vector(out, "b2", c.gcn->b2);
    detail::put_matrix(out, "w_out", c.gcn->w_out);
    detail::put_vector(out, "b_out", c.gcn->b_out);
  }
  out += "end\n";
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& content, const std::string& source = "checkpoint") {
  detail::CheckpointReader r(content, source);
  auto head = r.expect("tracediag-checkpoint", 2);
  if (head[1] != std::to_string(kCheckpointVersion)) r.fail("unsupported version " + head[1]);
  Checkpoint c;
  try {
    c.model_kind = parse_model_kind(r.expect("model", 2)[1]);
    c.task = parse_task(r.expect("task", 2)[1]);
    c.dataset = parse_dataset_kind(r.expect("dataset", 2)[1]);
  } catch (const SchemaError&) {
    throw;
  } catch (const DataError& e) {
    r.fail(e.what());
  }
  auto classes = r.expect("classes", 2);
  const auto n_classes = r.count(classes[1]);
  if (classes.size() != n_classes + 2) r.fail("class count does not match names");
  for (std::size_t i = 0; i < n_classes; ++i) c.class_names.push_back(tsv_unescape(classes[i + 2]));

  if (c.model_kind == ModelKind::Baseline) {
    McvModel m;
    m.vocab.key_mode = parse_mcv_key(r.expect("mcv_key", 2)[1]);
    const auto n = r.count(r.expect("vocab", 2)[1]);
    for (std::size_t i = 0; i < n; ++i) {
      auto f = r.fields();
      m.vocab.keys.push_back(tsv_unescape(join(f, "\t")));
    }
    m.linear.w = r.matrix("w");
    m.linear.b = r.vector("b");
    if (m.linear.w.rows() != m.vocab.size() || m.linear.b.size() != m.linear.w.cols())
      r.fail("baseline shapes are inconsistent with the vocabulary");
    c.mcv = std::move(m);
  } else {
    auto emb = r.expect("embedding", 3);
    c.embedding_dim = r.count(emb[1]);
    c.embedding_source = tsv_unescape(emb[2]);
    GcnModel g;
    g.symmetrize = r.expect("symmetrize", 2)[1] == "1";
    g.w1 = r.matrix("w1");
    g.b1 = r.vector("b1");
    g.w2 = r.matrix("w2");
    g.b2 = r.vector("b2");
    g.w_out = r.matrix("w_out");
    g.b_out = r.vector("b_out");
    const auto h = g.w1.cols();
    if (g.b1.size() != h || g.w2.rows() != h || g.w2.cols() != h || g.b2.size() != h || g.w_out.rows() != h ||
        g.b_out.size() != g.w_out.cols())
      r.fail("graph model shapes are inconsistent");
    if (g.w1.rows() != kStructuralFeatures + c.embedding_dim) r.fail("input width does not match embedding dim");
    c.gcn = std::move(g);
  }
  r.expect("end", 1);
  const std::size_t outputs = c.mcv ? c.mcv->linear.outputs() : c.gcn->outputs();
  const std::size_t expected = c.task == Task::AnomalyDetection ? 1 : c.class_names.size();
  if (outputs != expected) r.fail("output width does not match task");
  return c;
}

inline void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(c));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace tracediag
