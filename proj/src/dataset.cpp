#include "causalcollab/dataset.hpp"

#include <cmath>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include "causalcollab/digest.hpp"
#include "causalcollab/errors.hpp"
#include "causalcollab/json_io.hpp"

namespace causalcollab {

std::string to_string(Split s) { return s == Split::observational ? "observational" : "counterfactual"; }

Split split_from_string(const std::string& s) {
  if (s == "observational") return Split::observational;
  if (s == "counterfactual") return Split::counterfactual;
  throw std::invalid_argument("unknown split '" + s + "'");
}

Dataset::Dataset(DatasetMeta meta, std::vector<Trajectory> trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("dataset must contain at least one trajectory");
  if (meta.T < 1) throw std::invalid_argument("meta.T must be >= 1");
  if (meta.d < 1) throw std::invalid_argument("meta.d must be >= 1");
  if (meta.alpha && !(*meta.alpha >= 0.0 && *meta.alpha <= 1.0))
    throw std::invalid_argument("meta.alpha must lie in [0, 1]");
  if (meta.sigma && !(*meta.sigma >= 0.0)) throw std::invalid_argument("meta.sigma must be >= 0");
  for (const auto& tr : trajectories) {
    if (static_cast<int>(tr.steps.size()) != meta.T)
      throw DimensionError("trajectory " + tr.id + " has " + std::to_string(tr.steps.size()) +
                           " steps, expected T=" + std::to_string(meta.T));
    if (tr.y != 0 && tr.y != 1) throw std::invalid_argument("trajectory " + tr.id + ": y must be 0 or 1");
    for (const auto& st : tr.steps) {
      if (st.l.size() != meta.d || st.a.size() != meta.d)
        throw DimensionError("trajectory " + tr.id + ": step vector length differs from d=" +
                             std::to_string(meta.d));
      if (!st.l.allFinite() || !st.a.allFinite())
        throw std::invalid_argument("trajectory " + tr.id + ": non-finite step vector");
    }
  }
  auto impl = std::make_shared<Impl>();
  impl->meta = std::move(meta);
  impl->trajectories = std::move(trajectories);
  impl_ = std::move(impl);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Trajectory> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(impl_->trajectories.at(i));
  return Dataset(impl_->meta, std::move(picked));
}

const std::string& Dataset::digest() const {
  std::call_once(impl_->digest_once, [this] { impl_->digest = sha256_hex(serialize_dataset(*this)); });
  return impl_->digest;
}

bool Dataset::all_in_split(Split s) const {
  for (const auto& tr : impl_->trajectories)
    if (tr.split != s) return false;
  return true;
}

namespace {

Json meta_to_json(const DatasetMeta& m) {
  Json meta;
  meta["T"] = m.T;
  meta["d"] = m.d;
  if (m.alpha) meta["alpha"] = *m.alpha;
  if (m.sigma) meta["sigma"] = *m.sigma;
  if (m.seed) meta["seed"] = *m.seed;
  meta["source"] = m.source;
  Json header;
  header["meta"] = std::move(meta);
  return header;
}

Json trajectory_to_json(const Trajectory& tr) {
  Json rec;
  rec["id"] = tr.id;
  rec["split"] = to_string(tr.split);
  rec["y"] = tr.y;
  if (tr.x) rec["x"] = *tr.x;
  Json steps = Json::array();
  for (const auto& st : tr.steps) {
    Json s;
    s["l"] = vector_to_json(st.l);
    s["a"] = vector_to_json(st.a);
    steps.push_back(std::move(s));
  }
  rec["steps"] = std::move(steps);
  return rec;
}

const Json& require_field(const Json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(line, key, "missing required field");
  return *it;
}

Eigen::VectorXd parse_vector(const Json& j, std::size_t line, const std::string& field, int d) {
  if (!j.is_array()) throw SchemaError(line, field, "expected an array of numbers");
  if (static_cast<int>(j.size()) != d)
    throw DimensionError("line " + std::to_string(line) + ", field '" + field + "': vector length " +
                         std::to_string(j.size()) + " does not match d=" + std::to_string(d));
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) {
    const Json& e = j[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw SchemaError(line, field, "non-numeric vector entry");
    v[i] = e.get<double>();
  }
  return v;
}

DatasetMeta parse_meta(const Json& header) {
  constexpr std::size_t line = 1;
  if (!header.is_object() || !header.contains("meta"))
    throw SchemaError(line, "meta", "first line must be the header record {\"meta\":{...}}");
  const Json& m = header["meta"];
  if (!m.is_object()) throw SchemaError(line, "meta", "expected an object");
  static const std::unordered_set<std::string> known{"T", "d", "alpha", "sigma", "seed", "source"};
  for (auto it = m.begin(); it != m.end(); ++it)
    if (!known.count(it.key())) throw SchemaError(line, "meta." + it.key(), "unknown field");
  DatasetMeta meta;
  const Json& T = require_field(m, "T", line);
  const Json& d = require_field(m, "d", line);
  if (!T.is_number_integer() || T.get<long long>() < 1) throw SchemaError(line, "meta.T", "expected integer >= 1");
  if (!d.is_number_integer() || d.get<long long>() < 1) throw SchemaError(line, "meta.d", "expected integer >= 1");
  meta.T = T.get<int>();
  meta.d = d.get<int>();
  if (m.contains("alpha")) {
    if (!m["alpha"].is_number()) throw SchemaError(line, "meta.alpha", "expected a number");
    meta.alpha = m["alpha"].get<double>();
    if (!(*meta.alpha >= 0.0 && *meta.alpha <= 1.0)) throw SchemaError(line, "meta.alpha", "must lie in [0, 1]");
  }
  if (m.contains("sigma")) {
    if (!m["sigma"].is_number()) throw SchemaError(line, "meta.sigma", "expected a number");
    meta.sigma = m["sigma"].get<double>();
    if (!(*meta.sigma >= 0.0)) throw SchemaError(line, "meta.sigma", "must be >= 0");
  }
  if (m.contains("seed")) {
    if (!m["seed"].is_number_integer()) throw SchemaError(line, "meta.seed", "expected an integer");
    meta.seed = m["seed"].get<std::int64_t>();
  }
  const Json& source = require_field(m, "source", line);
  if (!source.is_string()) throw SchemaError(line, "meta.source", "expected a string");
  meta.source = source.get<std::string>();
  return meta;
}

Trajectory parse_record(const Json& rec, const DatasetMeta& meta, std::size_t line) {
  if (!rec.is_object()) throw SchemaError(line, "<record>", "expected a JSON object");
  static const std::unordered_set<std::string> known{"id", "split", "y", "x", "steps"};
  for (auto it = rec.begin(); it != rec.end(); ++it)
    if (!known.count(it.key())) throw SchemaError(line, it.key(), "unknown field");
  Trajectory tr;
  const Json& id = require_field(rec, "id", line);
  if (!id.is_string()) throw SchemaError(line, "id", "expected a string");
  tr.id = id.get<std::string>();
  const Json& split = require_field(rec, "split", line);
  if (!split.is_string()) throw SchemaError(line, "split", "expected a string");
  try {
    tr.split = split_from_string(split.get<std::string>());
  } catch (const std::invalid_argument&) {
    throw SchemaError(line, "split", "must be 'observational' or 'counterfactual'");
  }
  const Json& y = require_field(rec, "y", line);
  if (!y.is_number_integer() || (y.get<long long>() != 0 && y.get<long long>() != 1))
    throw SchemaError(line, "y", "expected integer 0 or 1");
  tr.y = y.get<int>();
  if (rec.contains("x")) {
    if (!rec["x"].is_number_integer()) throw SchemaError(line, "x", "expected an integer");
    tr.x = rec["x"].get<int>();
  }
  const Json& steps = require_field(rec, "steps", line);
  if (!steps.is_array()) throw SchemaError(line, "steps", "expected an array");
  if (static_cast<int>(steps.size()) != meta.T)
    throw DimensionError("line " + std::to_string(line) + ", field 'steps': " + std::to_string(steps.size()) +
                         " steps, expected T=" + std::to_string(meta.T));
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const Json& s = steps[t];
    const std::string prefix = "steps[" + std::to_string(t) + "]";
    if (!s.is_object()) throw SchemaError(line, prefix, "expected an object with 'l' and 'a'");
    Step st;
    st.l = parse_vector(require_field(s, "l", line), line, prefix + ".l", meta.d);
    st.a = parse_vector(require_field(s, "a", line), line, prefix + ".a", meta.d);
    tr.steps.push_back(std::move(st));
  }
  return tr;
}

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  std::string out = dump_json(meta_to_json(ds.meta()));
  out += '\n';
  for (const auto& tr : ds.trajectories()) {
    out += dump_json(trajectory_to_json(tr));
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::optional<DatasetMeta> meta;
  std::vector<Trajectory> trajectories;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!meta) throw SchemaError(lineno, "meta", "empty header line");
      continue;
    }
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw SchemaError(lineno, "<json>", std::string("malformed JSON: ") + e.what());
    }
    if (!meta) {
      meta = parse_meta(j);
      continue;
    }
    Trajectory tr = parse_record(j, *meta, lineno);
    if (!ids.insert(tr.id).second) throw SchemaError(lineno, "id", "duplicate id '" + tr.id + "'");
    trajectories.push_back(std::move(tr));
  }
  if (!meta) throw SchemaError(1, "meta", "empty file");
  if (trajectories.empty()) throw SchemaError(lineno + 1, "<record>", "dataset has no trajectory records");
  return Dataset(*meta, std::move(trajectories));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_text_file(path)); }

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, serialize_dataset(ds));
}

void require_observational(const Dataset& ds, const std::string& context) {
  for (const auto& tr : ds.trajectories())
    if (tr.split != Split::observational)
      throw LeakageError(context + ": counterfactual trajectory '" + tr.id + "' reached a fitting routine");
}

}  // namespace causalcollab
