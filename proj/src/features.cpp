#include "callrisk/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace callrisk::features {

std::string_view to_string(Modality m) noexcept {
  return m == Modality::acoustic ? "acoustic" : "text";
}

std::string_view to_string(AslDim d) noexcept {
  switch (d) {
    case AslDim::tension: return "tension";
    case AslDim::stability: return "stability";
    case AslDim::arousal: return "arousal";
  }
  return "?";
}

std::string_view to_string(Stat s) noexcept {
  switch (s) {
    case Stat::mean: return "mean";
    case Stat::std_dev: return "std";
    case Stat::skewness: return "skewness";
    case Stat::kurtosis: return "kurtosis";
  }
  return "?";
}

Moments moments(std::span<const double> values) {
  if (values.empty()) throw EmptySeries();
  const std::size_t n = values.size();

  Moments m;
  m.n = n;

  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) {
    // All values identical: mean is exact, higher moments zero by convention.
    m.mean = *mn;
    m.zero_variance = true;
    return m;
  }

  long double sum = 0.0L;
  for (double v : values) sum += v;
  const long double mu = sum / static_cast<long double>(n);

  long double m2 = 0.0L, m3 = 0.0L, m4 = 0.0L;
  for (double v : values) {
    const long double d = static_cast<long double>(v) - mu;
    const long double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  m.mean = static_cast<double>(mu);
  m.std_dev = static_cast<double>(std::sqrt(m2));
  m.skewness = static_cast<double>(m3 / (m2 * std::sqrt(m2)));
  m.kurtosis_excess = static_cast<double>(m4 / (m2 * m2) - 3.0L);
  return m;
}

std::string feature_name(Role role, NameSection section, Modality modality,
                         AslDim dim, Stat stat) {
  if (section == NameSection::delta && stat != Stat::mean && stat != Stat::std_dev) {
    throw InvalidCombination("delta features carry only mean and std, got " +
                             std::string(to_string(stat)));
  }
  std::string name(ingest::role_tag(role));
  name += '_';
  switch (section) {
    case NameSection::presentation: name += "presentation"; break;
    case NameSection::qa: name += "q&a"; break;
    case NameSection::delta: name += "delta"; break;
  }
  name += '_';
  name += to_string(modality);
  name += '_';
  name += to_string(dim);
  name += '_';
  name += to_string(stat);
  return name;
}

std::vector<asl::AslVector> asl_series(const CallRecord& call, Role role,
                                       Section section, Modality modality,
                                       const asl::AslTable& table) {
  std::vector<const ingest::Utterance*> matched;
  for (const auto& u : call.utterances) {
    if (u.role != role || u.section != section) continue;
    const auto& emotion =
        modality == Modality::text ? u.text_emotion : u.acoustic_emotion;
    if (emotion) matched.push_back(&u);
  }
  std::stable_sort(matched.begin(), matched.end(),
                   [](const auto* a, const auto* b) {
                     return a->order_index < b->order_index;
                   });

  std::vector<asl::AslVector> series;
  series.reserve(matched.size());
  for (const auto* u : matched) {
    const asl::Emotion e =
        modality == Modality::text ? *u->text_emotion : *u->acoustic_emotion;
    series.push_back(table[e]);
  }
  return series;
}

std::string interaction_name(const std::string& a, const std::string& b) {
  return "inter__" + a + "__" + b;
}

InteractionSpec default_interactions() {
  InteractionSpec spec;
  for (Role role : ingest::kAllRoles) {
    const std::string stability =
        feature_name(role, NameSection::delta, Modality::text, AslDim::stability, Stat::mean);
    const std::string tension =
        feature_name(role, NameSection::delta, Modality::text, AslDim::tension, Stat::mean);
    spec.emplace_back(stability, tension);
    spec.emplace_back("hist_vol_30d", stability);
  }
  return spec;
}

namespace {

constexpr std::array<Modality, 2> kModalities = {Modality::acoustic, Modality::text};
constexpr std::array<AslDim, 3> kDims = {AslDim::tension, AslDim::stability, AslDim::arousal};
constexpr std::array<Stat, 4> kStats = {Stat::mean, Stat::std_dev, Stat::skewness, Stat::kurtosis};

std::vector<double> dim_values(const std::vector<asl::AslVector>& series, AslDim dim) {
  std::vector<double> values;
  values.reserve(series.size());
  for (const auto& v : series) values.push_back(v.component(static_cast<int>(dim)));
  return values;
}

}  // namespace

std::vector<std::string> feature_schema(const InteractionSpec& interactions) {
  std::vector<std::string> schema;
  schema.reserve(144 + 36 + interactions.size() + 1);
  for (Role role : ingest::kAllRoles) {
    for (NameSection section : {NameSection::presentation, NameSection::qa}) {
      for (Modality modality : kModalities) {
        for (AslDim dim : kDims) {
          for (Stat stat : kStats) {
            schema.push_back(feature_name(role, section, modality, dim, stat));
          }
        }
      }
    }
  }
  for (Role role : ingest::kAllRoles) {
    for (Modality modality : kModalities) {
      for (AslDim dim : kDims) {
        for (Stat stat : {Stat::mean, Stat::std_dev}) {
          schema.push_back(feature_name(role, NameSection::delta, modality, dim, stat));
        }
      }
    }
  }
  for (const auto& [a, b] : interactions) schema.push_back(interaction_name(a, b));
  schema.push_back("hist_vol_30d");
  return schema;
}

std::map<std::string, double> build_interactions(const FeatureRow& row,
                                                 const InteractionSpec& spec,
                                                 std::span<const std::string> schema) {
  std::map<std::string, double> additions;
  for (const auto& [a, b] : spec) {
    for (const std::string& operand : {a, b}) {
      if (std::find(schema.begin(), schema.end(), operand) == schema.end()) {
        throw UnknownFeatureName(operand);
      }
    }
    const auto va = row.get(a);
    const auto vb = row.get(b);
    if (va && vb) additions[interaction_name(a, b)] = *va * *vb;
  }
  return additions;
}

FeatureRow build_features(const CallRecord& call, const InteractionSpec& interactions,
                          const asl::AslTable& table) {
  FeatureRow row;
  row.call_id = call.call_id;

  for (Role role : ingest::kAllRoles) {
    for (Section section : {Section::presentation, Section::qa}) {
      const NameSection name_section = section == Section::presentation
                                           ? NameSection::presentation
                                           : NameSection::qa;
      for (Modality modality : kModalities) {
        const auto series = asl_series(call, role, section, modality, table);
        if (series.empty()) continue;
        for (AslDim dim : kDims) {
          const Moments m = moments(dim_values(series, dim));
          row.values[feature_name(role, name_section, modality, dim, Stat::mean)] = m.mean;
          row.values[feature_name(role, name_section, modality, dim, Stat::std_dev)] = m.std_dev;
          row.values[feature_name(role, name_section, modality, dim, Stat::skewness)] = m.skewness;
          row.values[feature_name(role, name_section, modality, dim, Stat::kurtosis)] = m.kurtosis_excess;
        }
      }
    }
  }

  for (Role role : ingest::kAllRoles) {
    for (Modality modality : kModalities) {
      for (AslDim dim : kDims) {
        const auto qa_mean = row.get(feature_name(role, NameSection::qa, modality, dim, Stat::mean));
        const auto pres_mean =
            row.get(feature_name(role, NameSection::presentation, modality, dim, Stat::mean));
        if (qa_mean && pres_mean) {
          row.values[feature_name(role, NameSection::delta, modality, dim, Stat::mean)] =
              *qa_mean - *pres_mean;
        }
        const auto qa_std = row.get(feature_name(role, NameSection::qa, modality, dim, Stat::std_dev));
        const auto pres_std =
            row.get(feature_name(role, NameSection::presentation, modality, dim, Stat::std_dev));
        if (qa_std && pres_std) {
          row.values[feature_name(role, NameSection::delta, modality, dim, Stat::std_dev)] =
              *qa_std - *pres_std;
        }
      }
    }
  }

  row.values["hist_vol_30d"] = call.hist_vol_30d;

  const auto schema = feature_schema(interactions);
  for (auto& [name, value] : build_interactions(row, interactions, schema)) {
    row.values[name] = value;
  }
  return row;
}

Eigen::MatrixXd FeatureMatrix::dense() const {
  Eigen::MatrixXd X(n_rows(), n_cols());
  X.setConstant(std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index i = 0; i < n_rows(); ++i) {
    for (Eigen::Index j = 0; j < n_cols(); ++j) {
      if (auto v = rows[i].get(schema[j])) X(i, j) = *v;
    }
  }
  return X;
}

Eigen::VectorXd FeatureMatrix::target_column(int horizon, TargetKind kind) const {
  Eigen::VectorXd y(n_rows());
  y.setConstant(std::numeric_limits<double>::quiet_NaN());
  const auto it = targets.find(horizon);
  if (it == targets.end()) return y;
  for (Eigen::Index i = 0; i < n_rows(); ++i) {
    const auto& cell = it->second[static_cast<std::size_t>(i)];
    if (cell) y(i) = kind == TargetKind::car ? cell->car : cell->realized_vol;
  }
  return y;
}

FeatureMatrix build_matrix(std::span<const CallRecord> calls,
                           const InteractionSpec& interactions,
                           const asl::AslTable& table) {
  FeatureMatrix matrix;
  matrix.schema = feature_schema(interactions);
  matrix.rows.reserve(calls.size());
  for (int horizon : ingest::kHorizons) {
    matrix.targets[horizon].reserve(calls.size());
  }
  for (const CallRecord& call : calls) {
    matrix.rows.push_back(build_features(call, interactions, table));
    for (int horizon : ingest::kHorizons) {
      auto it = call.targets.find(horizon);
      matrix.targets[horizon].push_back(
          it == call.targets.end() ? std::nullopt : std::optional(it->second));
    }
  }
  return matrix;
}

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_matrix_csv(std::ostream& out, const FeatureMatrix& matrix) {
  out << "call_id";
  for (const auto& name : matrix.schema) out << ',' << name;
  for (const char* kind : {"car", "realized_vol"}) {
    for (int horizon : ingest::kHorizons) out << ',' << kind << '_' << horizon;
  }
  out << '\n';

  for (Eigen::Index i = 0; i < matrix.n_rows(); ++i) {
    const FeatureRow& row = matrix.rows[static_cast<std::size_t>(i)];
    out << row.call_id;
    for (const auto& name : matrix.schema) {
      out << ',';
      if (auto v = row.get(name)) out << format_value(*v);
    }
    for (TargetKind kind : {TargetKind::car, TargetKind::realized_vol}) {
      for (int horizon : ingest::kHorizons) {
        out << ',';
        const auto& cell = matrix.targets.at(horizon)[static_cast<std::size_t>(i)];
        if (cell) out << format_value(kind == TargetKind::car ? cell->car : cell->realized_vol);
      }
    }
    out << '\n';
  }
}

std::map<Role, RoleConcordance> modality_concordance(std::span<const CallRecord> calls) {
  std::map<Role, RoleConcordance> result;
  for (const CallRecord& call : calls) {
    for (const auto& u : call.utterances) {
      if (!u.text_emotion || !u.acoustic_emotion) continue;
      auto [it, inserted] = result.try_emplace(u.role);
      if (inserted) it->second.counts.setZero();
      it->second.counts(static_cast<int>(*u.acoustic_emotion),
                        static_cast<int>(*u.text_emotion)) += 1;
      it->second.total += 1;
    }
  }
  if (result.empty()) throw NoDualLabeledUtterances();

  for (auto& [role, c] : result) {
    const double total = static_cast<double>(c.total);
    const double hits = static_cast<double>(c.counts.trace());
    c.agreement = hits / total;

    double expected = 0.0;
    for (int i = 0; i < asl::kEmotionCount; ++i) {
      const double row_sum = static_cast<double>(c.counts.row(i).sum());
      const double col_sum = static_cast<double>(c.counts.col(i).sum());
      expected += row_sum * col_sum;
    }
    expected /= total * total;
    if (expected >= 1.0) {
      // Single observed category on both sides; perfect agreement reads 1.
      c.kappa = c.agreement >= 1.0 ? 1.0 : 0.0;
    } else {
      c.kappa = (c.agreement - expected) / (1.0 - expected);
    }
  }
  return result;
}

}  // namespace callrisk::features
