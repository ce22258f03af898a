#include "kids/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_map>

#include "json.hpp"

#include "kids/errors.hpp"
#include "kids/ioutil.hpp"

namespace kids {

using ordered_json = nlohmann::ordered_json;

// Collected when a sink is given; otherwise surfaced on stderr so a warning
// is never silently lost.
void warn(Warnings* sink, const std::string& msg) {
  if (sink != nullptr)
    sink->push_back(msg);
  else
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

// --- schema ------------------------------------------------------------------

namespace {

const char* kind_name(ColKind k) {
  switch (k) {
    case ColKind::kNumeric: return "numeric";
    case ColKind::kCategorical: return "categorical";
    case ColKind::kLabel: return "label";
    case ColKind::kSourceId: return "source_id";
    case ColKind::kIgnore: return "ignore";
  }
  return "?";
}

ColKind kind_from_name(const std::string& s) {
  if (s == "numeric") return ColKind::kNumeric;
  if (s == "categorical") return ColKind::kCategorical;
  if (s == "label") return ColKind::kLabel;
  if (s == "source_id") return ColKind::kSourceId;
  if (s == "ignore") return ColKind::kIgnore;
  throw DataError("unknown column kind in schema: '" + s + "'");
}

}  // namespace

void Schema::validate() const {
  std::size_t labels = 0, sources = 0;
  for (const auto& c : columns) {
    if (c.kind == ColKind::kLabel) ++labels;
    if (c.kind == ColKind::kSourceId) ++sources;
  }
  if (labels != 1)
    throw DataError("schema must have exactly one label column, found " +
                    std::to_string(labels));
  if (sources > 1)
    throw DataError("schema allows at most one source_id column, found " +
                    std::to_string(sources));
  if (class_names.empty()) throw DataError("schema class_names is empty");
  std::set<std::string> uniq(class_names.begin(), class_names.end());
  if (uniq.size() != class_names.size())
    throw DataError("schema class_names contains duplicates");
}

std::string Schema::to_json_text() const {
  ordered_json j;
  j["columns"] = ordered_json::array();
  for (const auto& c : columns)
    j["columns"].push_back({{"name", c.name}, {"kind", kind_name(c.kind)}});
  j["class_names"] = class_names;
  return j.dump(2) + "\n";
}

Schema Schema::from_json_text(const std::string& text) {
  Schema s;
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("schema json parse failed: ") + e.what());
  }
  if (!j.contains("columns") || !j.contains("class_names"))
    throw DataError("schema json needs 'columns' and 'class_names'");
  for (const auto& c : j["columns"])
    s.columns.push_back({c.at("name").get<std::string>(),
                         kind_from_name(c.at("kind").get<std::string>())});
  for (const auto& n : j["class_names"])
    s.class_names.push_back(n.get<std::string>());
  s.validate();
  return s;
}

// --- csv ---------------------------------------------------------------------

namespace {

// Whole-text CSV parse; quoted fields may hold commas, doubled quotes, and
// newlines. Returns rows of raw fields.
std::vector<std::vector<std::string>> parse_csv_text(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t i = 0;
  auto end_field = [&]() {
    if (!field_was_quoted) {
      // trim surrounding whitespace of unquoted fields
      std::size_t a = field.find_first_not_of(" \t\r");
      std::size_t b = field.find_last_not_of(" \t\r");
      field = (a == std::string::npos) ? "" : field.substr(a, b - a + 1);
    }
    row.push_back(field);
    field.clear();
    field_was_quoted = false;
  };
  auto end_row = [&]() {
    end_field();
    bool blank = row.size() == 1 && row[0].empty();
    if (!blank) rows.push_back(row);
    row.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty()) {
      in_quotes = true;
      field_was_quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else {
      field += c;
    }
    ++i;
  }
  if (!field.empty() || !row.empty() || field_was_quoted) end_row();
  return rows;
}

bool parse_finite_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) return false;
  return std::isfinite(out);
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

}  // namespace

RawTable load_csv(const std::string& path, const Schema& schema,
                  Warnings* warnings) {
  schema.validate();
  std::string text = read_file_bytes(path);
  auto rows = parse_csv_text(text);
  if (rows.empty()) throw DataError("csv file is empty: " + path);
  if (rows.size() == 1) throw DataError("csv has a header but no data rows: " + path);

  const auto& header = rows[0];
  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < header.size(); ++i) col_of[header[i]] = i;

  struct Bound {
    std::size_t csv_idx;
    ColKind kind;
    std::size_t typed_idx;  // index into the matching RawTable column group
  };
  std::vector<Bound> bound;
  RawTable t;
  std::size_t label_idx = 0;
  bool has_source = false;
  for (const auto& c : schema.columns) {
    if (c.kind == ColKind::kIgnore) continue;
    auto it = col_of.find(c.name);
    if (it == col_of.end())
      throw DataError("column '" + c.name + "' missing from csv header of " + path);
    if (c.kind == ColKind::kNumeric) {
      bound.push_back({it->second, c.kind, t.numeric_names.size()});
      t.numeric_names.push_back(c.name);
      t.numeric_cols.emplace_back();
    } else if (c.kind == ColKind::kCategorical) {
      bound.push_back({it->second, c.kind, t.categorical_names.size()});
      t.categorical_names.push_back(c.name);
      t.categorical_cols.emplace_back();
    } else if (c.kind == ColKind::kLabel) {
      label_idx = it->second;
      bound.push_back({it->second, c.kind, 0});
    } else if (c.kind == ColKind::kSourceId) {
      has_source = true;
      bound.push_back({it->second, c.kind, 0});
    }
  }
  std::size_t schema_cols = 0;
  for (const auto& c : schema.columns)
    if (c.kind != ColKind::kIgnore) ++schema_cols;
  if (header.size() > schema_cols)
    warn(warnings, "csv has " + std::to_string(header.size() - schema_cols) +
                       " column(s) not named in the schema; they are ignored");

  std::unordered_map<std::string, int> class_idx;
  for (std::size_t i = 0; i < schema.class_names.size(); ++i)
    class_idx[schema.class_names[i]] = static_cast<int>(i);

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    bool ok = true;
    std::vector<double> nums(t.numeric_names.size());
    std::vector<std::string> cats(t.categorical_names.size());
    int label = -1;
    std::string source;
    for (const auto& b : bound) {
      if (b.csv_idx >= fields.size()) {
        ok = false;
        break;
      }
      const std::string& f = fields[b.csv_idx];
      if (b.kind == ColKind::kNumeric) {
        if (!parse_finite_double(f, nums[b.typed_idx])) {
          ok = false;
          break;
        }
      } else if (b.kind == ColKind::kCategorical) {
        cats[b.typed_idx] = f;
      } else if (b.kind == ColKind::kLabel) {
        auto it = class_idx.find(f);
        if (it == class_idx.end()) {
          ok = false;
          break;
        }
        label = it->second;
      } else {
        source = f;
      }
    }
    (void)label_idx;
    if (!ok) {
      ++t.dropped_rows;
      continue;
    }
    for (std::size_t i = 0; i < nums.size(); ++i)
      t.numeric_cols[i].push_back(nums[i]);
    for (std::size_t i = 0; i < cats.size(); ++i)
      t.categorical_cols[i].push_back(std::move(cats[i]));
    t.labels.push_back(label);
    if (has_source) t.source_ids.push_back(std::move(source));
    ++t.n_rows;
  }
  if (t.dropped_rows > 0)
    warn(warnings, "dropped " + std::to_string(t.dropped_rows) +
                       " malformed row(s) while loading " + path);
  if (t.n_rows == 0)
    throw DataError("no usable data rows in " + path + " (all " +
                    std::to_string(t.dropped_rows) + " rows malformed)");
  return t;
}

void write_csv(const std::string& path, const RawTable& table,
               const Schema& schema) {
  std::string out;
  bool first = true;
  for (const auto& c : schema.columns) {
    if (c.kind == ColKind::kIgnore) continue;
    if (!first) out += ',';
    out += csv_quote(c.name);
    first = false;
  }
  out += '\n';

  std::unordered_map<std::string, std::size_t> num_idx, cat_idx;
  for (std::size_t i = 0; i < table.numeric_names.size(); ++i)
    num_idx[table.numeric_names[i]] = i;
  for (std::size_t i = 0; i < table.categorical_names.size(); ++i)
    cat_idx[table.categorical_names[i]] = i;

  for (std::size_t r = 0; r < table.n_rows; ++r) {
    first = true;
    for (const auto& c : schema.columns) {
      if (c.kind == ColKind::kIgnore) continue;
      if (!first) out += ',';
      first = false;
      switch (c.kind) {
        case ColKind::kNumeric:
          out += fmt_real(table.numeric_cols[num_idx.at(c.name)][r]);
          break;
        case ColKind::kCategorical:
          out += csv_quote(table.categorical_cols[cat_idx.at(c.name)][r]);
          break;
        case ColKind::kLabel:
          out += csv_quote(schema.class_names[static_cast<std::size_t>(table.labels[r])]);
          break;
        case ColKind::kSourceId:
          out += csv_quote(table.source_ids[r]);
          break;
        case ColKind::kIgnore:
          break;
      }
    }
    out += '\n';
  }
  write_file_bytes(path, out);
}

// --- preprocessing -------------------------------------------------------------

PreprocessMap fit_preprocess(const RawTable& table,
                             const std::vector<std::size_t>& fit_rows,
                             Warnings* warnings) {
  if (fit_rows.empty()) throw DataError("fit_preprocess: no rows to fit on");
  PreprocessMap m;
  const double n = static_cast<double>(fit_rows.size());
  for (std::size_t c = 0; c < table.numeric_names.size(); ++c) {
    const auto& col = table.numeric_cols[c];
    double mean = 0.0;
    for (std::size_t r : fit_rows) mean += col[r];
    mean /= n;
    double var = 0.0;
    for (std::size_t r : fit_rows) {
      double d = col[r] - mean;
      var += d * d;
    }
    var /= n;  // population variance, by convention
    double sd = std::sqrt(var);
    if (sd <= 1e-12) {
      m.dropped_numeric.push_back(table.numeric_names[c]);
      warn(warnings, "numeric column '" + table.numeric_names[c] +
                         "' has zero variance on the fit rows; dropped");
      continue;
    }
    m.numeric_names.push_back(table.numeric_names[c]);
    m.means.push_back(mean);
    m.stddevs.push_back(sd);
  }
  for (std::size_t c = 0; c < table.categorical_names.size(); ++c) {
    std::set<std::string> vocab;
    for (std::size_t r : fit_rows) vocab.insert(table.categorical_cols[c][r]);
    m.categorical_names.push_back(table.categorical_names[c]);
    m.vocabularies.emplace_back(vocab.begin(), vocab.end());
  }
  m.expanded_dim = m.numeric_names.size();
  for (const auto& v : m.vocabularies) m.expanded_dim += v.size();
  if (m.expanded_dim == 0)
    throw DataError("fit_preprocess produced an empty feature space");
  return m;
}

std::vector<std::string> PreprocessMap::feature_names() const {
  std::vector<std::string> names = numeric_names;
  for (std::size_t c = 0; c < categorical_names.size(); ++c)
    for (const auto& v : vocabularies[c])
      names.push_back(categorical_names[c] + "=" + v);
  return names;
}

Mat32 apply_preprocess(const RawTable& table, const PreprocessMap& map) {
  std::unordered_map<std::string, std::size_t> num_idx;
  for (std::size_t i = 0; i < table.numeric_names.size(); ++i)
    num_idx[table.numeric_names[i]] = i;
  std::unordered_map<std::string, std::size_t> cat_idx;
  for (std::size_t i = 0; i < table.categorical_names.size(); ++i)
    cat_idx[table.categorical_names[i]] = i;

  std::vector<std::size_t> num_src(map.numeric_names.size());
  for (std::size_t i = 0; i < map.numeric_names.size(); ++i) {
    auto it = num_idx.find(map.numeric_names[i]);
    if (it == num_idx.end())
      throw DataError("table lacks numeric column '" + map.numeric_names[i] +
                      "' required by the preprocess map");
    num_src[i] = it->second;
  }
  std::vector<std::size_t> cat_src(map.categorical_names.size());
  std::vector<std::unordered_map<std::string, std::size_t>> vocab_idx(
      map.categorical_names.size());
  for (std::size_t i = 0; i < map.categorical_names.size(); ++i) {
    auto it = cat_idx.find(map.categorical_names[i]);
    if (it == cat_idx.end())
      throw DataError("table lacks categorical column '" +
                      map.categorical_names[i] + "' required by the preprocess map");
    cat_src[i] = it->second;
    for (std::size_t v = 0; v < map.vocabularies[i].size(); ++v)
      vocab_idx[i][map.vocabularies[i][v]] = v;
  }

  Mat32 x(table.n_rows, map.expanded_dim, 0.0f);
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    float* row = x.row(r);
    for (std::size_t i = 0; i < num_src.size(); ++i) {
      double v = table.numeric_cols[num_src[i]][r];
      row[i] = static_cast<float>((v - map.means[i]) / map.stddevs[i]);
    }
    std::size_t base = num_src.size();
    for (std::size_t i = 0; i < cat_src.size(); ++i) {
      const std::string& v = table.categorical_cols[cat_src[i]][r];
      auto it = vocab_idx[i].find(v);
      if (it != vocab_idx[i].end()) row[base + it->second] = 1.0f;
      // unseen category: leave the block all-zero
      base += map.vocabularies[i].size();
    }
  }
  return x;
}

std::string PreprocessMap::to_json_text() const {
  ordered_json j;
  j["numeric"] = ordered_json::array();
  for (std::size_t i = 0; i < numeric_names.size(); ++i)
    j["numeric"].push_back({{"name", numeric_names[i]},
                            {"mean", means[i]},
                            {"stddev", stddevs[i]}});
  j["dropped_numeric"] = dropped_numeric;
  j["categorical"] = ordered_json::array();
  for (std::size_t i = 0; i < categorical_names.size(); ++i)
    j["categorical"].push_back(
        {{"name", categorical_names[i]}, {"vocabulary", vocabularies[i]}});
  j["unseen_category_policy"] = "all-zero one-hot block";
  j["stddev_convention"] = "population (divide by n)";
  j["expanded_dim"] = expanded_dim;
  return j.dump(2) + "\n";
}

PreprocessMap PreprocessMap::from_json_text(const std::string& text) {
  PreprocessMap m;
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("preprocess map json parse failed: ") + e.what());
  }
  for (const auto& c : j.at("numeric")) {
    m.numeric_names.push_back(c.at("name").get<std::string>());
    m.means.push_back(c.at("mean").get<double>());
    m.stddevs.push_back(c.at("stddev").get<double>());
  }
  for (const auto& d : j.at("dropped_numeric"))
    m.dropped_numeric.push_back(d.get<std::string>());
  for (const auto& c : j.at("categorical")) {
    m.categorical_names.push_back(c.at("name").get<std::string>());
    m.vocabularies.push_back(c.at("vocabulary").get<std::vector<std::string>>());
  }
  m.expanded_dim = j.at("expanded_dim").get<std::size_t>();
  std::size_t check = m.numeric_names.size();
  for (const auto& v : m.vocabularies) check += v.size();
  if (check != m.expanded_dim)
    throw DataError("preprocess map expanded_dim " +
                    std::to_string(m.expanded_dim) +
                    " disagrees with column count " + std::to_string(check));
  return m;
}

// --- splitting -----------------------------------------------------------------

const char* split_name(SplitTag t) {
  switch (t) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
  }
  return "?";
}

std::vector<SplitTag> split(const std::vector<int>& y,
                            const std::vector<std::string>& source_ids,
                            const SplitRatios& ratios, SeededRng& rng,
                            Warnings* warnings) {
  const double rsum = ratios.train + ratios.val + ratios.test;
  if (std::abs(rsum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 ||
      ratios.test < 0)
    throw std::invalid_argument("split ratios must be nonnegative and sum to 1");
  if (y.empty()) throw DataError("split: empty label vector");
  const double ratio[3] = {ratios.train, ratios.val, ratios.test};
  std::vector<SplitTag> tags(y.size(), SplitTag::kTrain);

  if (!source_ids.empty()) {
    if (source_ids.size() != y.size())
      throw DataError("split: source_ids length does not match labels");
    // Source-aware: a whole source goes to one split. Greedy bin packing,
    // big sources first, toward the requested proportions.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < y.size(); ++i)
      groups[source_ids[i]].push_back(i);
    std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> order;
    for (const auto& g : groups) order.push_back(&g);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) {
      if (a->second.size() != b->second.size())
        return a->second.size() > b->second.size();
      return a->first < b->first;
    });
    double assigned[3] = {0, 0, 0};
    const double total = static_cast<double>(y.size());
    for (auto* g : order) {
      int best = 0;
      double best_deficit = -1e300;
      for (int s = 0; s < 3; ++s) {
        double deficit = ratio[s] * total - assigned[s];
        if (deficit > best_deficit + 1e-12) {
          best = s;
          best_deficit = deficit;
        }
      }
      for (std::size_t i : g->second) tags[i] = static_cast<SplitTag>(best);
      assigned[best] += static_cast<double>(g->second.size());
    }
    if (groups.size() < 3)
      warn(warnings, "source-aware split with only " +
                         std::to_string(groups.size()) +
                         " source(s); some splits are empty");
    return tags;
  }

  // Stratified: per-class largest-remainder floors, then leftovers steered to
  // the splits with the largest global deficit (so totals land exactly on the
  // largest-remainder targets) without pushing any class more than one row
  // past its ideal share.
  int n_classes = 0;
  for (int c : y) n_classes = std::max(n_classes, c + 1);
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) throw DataError("split: negative class index");
    by_class[static_cast<std::size_t>(y[i])].push_back(i);
  }
  int distinct = 0;
  for (const auto& rows : by_class)
    if (!rows.empty()) ++distinct;
  if (distinct == 1)
    warn(warnings, "split: labels contain a single class; splits are still "
                   "produced but stratification is degenerate");

  // Pass 1: per-class floors (small classes divert whole to train).
  double total_valid = 0.0;
  std::vector<std::array<std::size_t, 3>> take(by_class.size(), {0, 0, 0});
  std::vector<bool> valid(by_class.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    if (rows.size() < 3) {
      warn(warnings, "class " + std::to_string(c) + " has only " +
                         std::to_string(rows.size()) +
                         " row(s); all of them go to train");
      for (std::size_t i : rows) tags[i] = SplitTag::kTrain;
      continue;
    }
    valid[c] = true;
    total_valid += static_cast<double>(rows.size());
    rng.shuffle(rows);
    for (int s = 0; s < 3; ++s)
      take[c][s] =
          static_cast<std::size_t>(ratio[s] * static_cast<double>(rows.size()));
  }
  double assigned[3] = {0, 0, 0};
  for (std::size_t c = 0; c < by_class.size(); ++c)
    for (int s = 0; s < 3; ++s) assigned[s] += static_cast<double>(take[c][s]);

  // Pass 2: hand each class's leftover rows (at most two) to the splits with
  // the largest global deficit, at most one bump per split per class, so split
  // totals land on target while every class stays within one row of its share.
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (!valid[c]) continue;
    std::size_t used = take[c][0] + take[c][1] + take[c][2];
    std::size_t leftover = by_class[c].size() - used;
    bool bumped[3] = {false, false, false};
    for (std::size_t l = 0; l < leftover; ++l) {
      int best = -1;
      double best_deficit = -1e300;
      for (int s = 0; s < 3; ++s) {
        if (bumped[s]) continue;
        double deficit = ratio[s] * total_valid - assigned[s];
        if (deficit > best_deficit + 1e-12) {
          best = s;
          best_deficit = deficit;
        }
      }
      ++take[c][static_cast<std::size_t>(best)];
      assigned[best] += 1.0;
      bumped[best] = true;
    }
    std::size_t at = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < take[c][s]; ++k)
        tags[by_class[c][at++]] = static_cast<SplitTag>(s);
  }
  return tags;
}

// --- synthesis -------------------------------------------------------------------

RawTable synthesize(const SynthSpec& spec, SeededRng& rng, Schema* schema_out) {
  if (spec.class_counts.empty())
    throw std::invalid_argument("synthesize: class_counts is empty");
  for (std::size_t c : spec.class_counts)
    if (c < 1) throw std::invalid_argument("synthesize: class counts must be >= 1");
  if (spec.separability <= 0.0 || spec.separability > 1.0)
    throw std::invalid_argument("synthesize: separability must lie in (0, 1]");
  if (spec.informative_dim > spec.numeric_dim)
    throw std::invalid_argument("synthesize: informative_dim exceeds numeric_dim");

  const std::size_t n_classes = spec.class_counts.size();
  std::size_t n_rows = 0;
  for (std::size_t c : spec.class_counts) n_rows += c;

  RawTable t;
  int width = 1;
  for (std::size_t v = spec.numeric_dim; v >= 10; v /= 10) ++width;
  for (std::size_t j = 0; j < spec.numeric_dim; ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "num_%0*zu", width, j);
    t.numeric_names.push_back(name);
    t.numeric_cols.emplace_back();
    t.numeric_cols.back().reserve(n_rows);
  }
  for (std::size_t k = 0; k < spec.cat_vocab_sizes.size(); ++k) {
    t.categorical_names.push_back("cat_" + std::to_string(k));
    t.categorical_cols.emplace_back();
    t.categorical_cols.back().reserve(n_rows);
  }
  t.labels.reserve(n_rows);

  // Sign pattern: class c points feature j up or down depending on the parity
  // of popcount(c & (j+1)); distinct classes disagree on about half of the
  // informative columns, so pairwise separation scales with separability.
  auto mean_of = [&](std::size_t c, std::size_t j) -> double {
    unsigned bits = static_cast<unsigned>(c & (j + 1));
    int parity = __builtin_popcount(bits) & 1;
    double sign = parity ? -1.0 : 1.0;
    return 3.0 * spec.separability * sign;
  };

  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t r = 0; r < spec.class_counts[c]; ++r) {
      for (std::size_t j = 0; j < spec.numeric_dim; ++j) {
        double mu = (j < spec.informative_dim) ? mean_of(c, j) : 0.0;
        t.numeric_cols[j].push_back(mu + rng.normal());
      }
      for (std::size_t k = 0; k < spec.cat_vocab_sizes.size(); ++k) {
        std::size_t vocab = spec.cat_vocab_sizes[k];
        std::size_t idx;
        if (rng.uniform() < spec.separability) {
          idx = c % vocab;
        } else {
          idx = rng.uniform_u64(vocab);
        }
        t.categorical_cols[k].push_back("v" + std::to_string(idx));
      }
      t.labels.push_back(static_cast<int>(c));
    }
  }
  if (spec.n_sources > 0) {
    t.source_ids.reserve(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r)
      t.source_ids.push_back("src_" + std::to_string(rng.uniform_u64(spec.n_sources)));
  }
  t.n_rows = n_rows;

  // Shuffle row order so files are not class-sorted.
  std::vector<std::size_t> perm(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) perm[i] = i;
  rng.shuffle(perm);
  auto permute_str = [&](std::vector<std::string>& col) {
    std::vector<std::string> out(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) out[i] = std::move(col[perm[i]]);
    col = std::move(out);
  };
  for (auto& col : t.numeric_cols) {
    std::vector<double> out(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) out[i] = col[perm[i]];
    col = std::move(out);
  }
  for (auto& col : t.categorical_cols) permute_str(col);
  {
    std::vector<int> out(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) out[i] = t.labels[perm[i]];
    t.labels = std::move(out);
  }
  if (!t.source_ids.empty()) permute_str(t.source_ids);

  if (schema_out != nullptr) {
    Schema s;
    for (const auto& n : t.numeric_names) s.columns.push_back({n, ColKind::kNumeric});
    for (const auto& n : t.categorical_names)
      s.columns.push_back({n, ColKind::kCategorical});
    s.columns.push_back({"label", ColKind::kLabel});
    if (spec.n_sources > 0) s.columns.push_back({"source", ColKind::kSourceId});
    for (std::size_t c = 0; c < n_classes; ++c)
      s.class_names.push_back("class_" + std::to_string(c));
    s.validate();
    *schema_out = s;
  }
  return t;
}

SynthSpec heavy_tail_preset() {
  SynthSpec s;
  const double fractions[] = {0.30, 0.25, 0.15, 0.10, 0.07,
                              0.05, 0.035, 0.025, 0.01, 0.005};
  const std::size_t total = 20000;
  for (double f : fractions)
    s.class_counts.push_back(static_cast<std::size_t>(f * total + 0.5));
  s.numeric_dim = 40;
  s.informative_dim = 20;
  s.cat_vocab_sizes = {4, 3};
  s.separability = 0.8;
  return s;
}

// --- profiling -----------------------------------------------------------------

ProfileResult profile(const RawTable& table,
                      const std::vector<std::string>& class_names,
                      std::size_t top_v, Warnings* warnings) {
  if (table.n_rows == 0) throw DataError("profile: empty table");
  ProfileResult p;
  p.class_names = class_names;
  p.class_counts.assign(class_names.size(), 0);
  for (int c : table.labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= class_names.size())
      throw DataError("profile: label index out of range");
    ++p.class_counts[static_cast<std::size_t>(c)];
  }
  const double n = static_cast<double>(table.n_rows);
  for (std::size_t c = 0; c < p.class_counts.size(); ++c)
    p.class_fractions.push_back(static_cast<double>(p.class_counts[c]) / n);

  struct ColStat {
    std::size_t idx;
    double mean;
    double var;
  };
  std::vector<ColStat> usable;
  for (std::size_t c = 0; c < table.numeric_cols.size(); ++c) {
    const auto& col = table.numeric_cols[c];
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= 1e-12) {
      warn(warnings, "profile: column '" + table.numeric_names[c] +
                         "' has zero variance; excluded from correlation");
      continue;
    }
    usable.push_back({c, mean, var});
  }
  if (usable.size() < 2) {
    warn(warnings, "profile: fewer than 2 usable numeric columns; "
                   "correlation matrix left empty");
    return p;
  }
  std::stable_sort(usable.begin(), usable.end(),
                   [](const ColStat& a, const ColStat& b) { return a.var > b.var; });
  if (usable.size() > top_v) usable.resize(top_v);

  const std::size_t v = usable.size();
  p.corr = Mat64(v, v);
  for (std::size_t i = 0; i < v; ++i) p.corr_names.push_back(table.numeric_names[usable[i].idx]);
  for (std::size_t i = 0; i < v; ++i) {
    p.corr(i, i) = 1.0;
    for (std::size_t j = i + 1; j < v; ++j) {
      const auto& a = table.numeric_cols[usable[i].idx];
      const auto& b = table.numeric_cols[usable[j].idx];
      double cov = 0.0;
      for (std::size_t r = 0; r < table.n_rows; ++r)
        cov += (a[r] - usable[i].mean) * (b[r] - usable[j].mean);
      cov /= n;
      double corr = cov / std::sqrt(usable[i].var * usable[j].var);
      corr = std::clamp(corr, -1.0, 1.0);
      p.corr(i, j) = corr;
      p.corr(j, i) = corr;
    }
  }
  return p;
}

void write_profile_csv(const ProfileResult& prof, const std::string& freq_path,
                       const std::string& corr_path) {
  std::string freq = "class,count,fraction\n";
  for (std::size_t c = 0; c < prof.class_names.size(); ++c) {
    freq += csv_quote(prof.class_names[c]) + "," +
            std::to_string(prof.class_counts[c]) + "," +
            fmt_real(prof.class_fractions[c]) + "\n";
  }
  write_file_bytes(freq_path, freq);

  std::string corr = "feature";
  for (const auto& n : prof.corr_names) corr += "," + csv_quote(n);
  corr += "\n";
  for (std::size_t i = 0; i < prof.corr_names.size(); ++i) {
    corr += csv_quote(prof.corr_names[i]);
    for (std::size_t j = 0; j < prof.corr_names.size(); ++j)
      corr += "," + fmt_real(prof.corr(i, j));
    corr += "\n";
  }
  write_file_bytes(corr_path, corr);
}

// --- dataset assembly and binary round-trip ---------------------------------------

std::vector<std::size_t> Dataset::rows_with_tag(SplitTag t) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == t) rows.push_back(i);
  return rows;
}

Mat32 Dataset::x_rows(const std::vector<std::size_t>& rows) const {
  Mat32 out(rows.size(), x.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(x.row(rows[i]), x.row(rows[i]) + x.cols, out.row(i));
  return out;
}

std::vector<int> Dataset::y_rows(const std::vector<std::size_t>& rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

Dataset build_dataset(const RawTable& table, const Schema& schema,
                      const PreprocessMap& map,
                      const std::vector<SplitTag>& tags) {
  if (tags.size() != table.n_rows)
    throw DataError("build_dataset: split tags do not cover the table");
  Dataset ds;
  ds.x = apply_preprocess(table, map);
  ds.y = table.labels;
  ds.split = tags;
  ds.class_names = schema.class_names;
  ds.feature_names = map.feature_names();
  ds.class_counts.assign(schema.class_names.size(), 0);
  for (int c : ds.y) {
    if (c < 0 || static_cast<std::size_t>(c) >= ds.class_counts.size())
      throw DataError("build_dataset: label index out of range");
    ++ds.class_counts[static_cast<std::size_t>(c)];
  }
  return ds;
}

namespace {
constexpr char kDatasetMagic[4] = {'K', 'I', 'D', 'D'};
}

void save_dataset(const Dataset& ds, const std::string& path) {
  BinWriter w;
  w.raw(kDatasetMagic, 4);
  w.u16(1);  // version
  w.u8(1);   // little-endian payload
  w.u32(static_cast<std::uint32_t>(ds.class_names.size()));
  for (const auto& n : ds.class_names) w.str(n);
  w.u32(static_cast<std::uint32_t>(ds.feature_names.size()));
  for (const auto& n : ds.feature_names) w.str(n);
  w.u64(ds.x.rows);
  w.u32(static_cast<std::uint32_t>(ds.x.cols));
  w.raw(ds.x.data.data(), ds.x.data.size() * sizeof(float));
  for (int v : ds.y) w.i32(v);
  for (SplitTag t : ds.split) w.u8(static_cast<std::uint8_t>(t));
  w.finish_to_file(path);
}

Dataset load_dataset(const std::string& path) {
  std::string payload = read_checked_container(path);
  BinReader r(payload, path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw DataError("not a dataset container: " + path);
  std::uint16_t version = r.u16();
  if (version != 1)
    throw DataError("unsupported dataset version " + std::to_string(version) +
                    " in " + path);
  if (r.u8() != 1) throw DataError("unsupported endianness flag in " + path);
  Dataset ds;
  std::uint32_t n_classes = r.u32();
  for (std::uint32_t i = 0; i < n_classes; ++i) ds.class_names.push_back(r.str());
  std::uint32_t n_features = r.u32();
  for (std::uint32_t i = 0; i < n_features; ++i)
    ds.feature_names.push_back(r.str());
  std::uint64_t rows = r.u64();
  std::uint32_t cols = r.u32();
  if (cols != n_features)
    throw DataError("dataset feature-name count disagrees with matrix width in " + path);
  ds.x = Mat32(rows, cols);
  r.raw(ds.x.data.data(), ds.x.data.size() * sizeof(float));
  ds.y.resize(rows);
  for (std::uint64_t i = 0; i < rows; ++i) ds.y[i] = r.i32();
  ds.split.resize(rows);
  for (std::uint64_t i = 0; i < rows; ++i) {
    std::uint8_t t = r.u8();
    if (t > 2) throw DataError("bad split tag in " + path);
    ds.split[i] = static_cast<SplitTag>(t);
  }
  if (r.remaining() != 0)
    throw DataError("trailing bytes after dataset payload in " + path);
  ds.class_counts.assign(n_classes, 0);
  for (int c : ds.y) {
    if (c < 0 || static_cast<std::size_t>(c) >= ds.class_counts.size())
      throw DataError("dataset label out of range in " + path);
    ++ds.class_counts[static_cast<std::size_t>(c)];
  }
  return ds;
}

}  // namespace kids
