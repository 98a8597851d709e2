#include "ippg/evaluator.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "ippg/error.hpp"

namespace ippg {

void HrTrack::validate() const {
  if (est_hr.empty()) throw Error(ErrorCode::EmptyTrack, subject_id + ": empty HR track");
  if (est_hr.size() != label_hr.size() || (!times.empty() && times.size() != est_hr.size())) {
    throw Error(ErrorCode::ShapeMismatch, subject_id + ": HR track columns differ in length");
  }
}

double pte6(const HrTrack& track, double threshold) {
  track.validate();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (std::abs(track.est_hr[i] - track.label_hr[i]) < threshold) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(track.size());
}

double rmse(const HrTrack& track) {
  track.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < track.size(); ++i) {
    const double e = track.est_hr[i] - track.label_hr[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(track.size()));
}

double mae(const HrTrack& track) {
  track.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < track.size(); ++i) s += std::abs(track.est_hr[i] - track.label_hr[i]);
  return s / static_cast<double>(track.size());
}

SubjectMetrics subject_metrics(const HrTrack& track) {
  return {pte6(track), rmse(track), mae(track), track.size()};
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::NoSubjects, "no values to aggregate");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

EvalReport aggregate(const std::map<std::string, SubjectMetrics>& per_subject,
                     std::string condition, std::string method) {
  if (per_subject.empty()) throw Error(ErrorCode::NoSubjects, "no subjects to aggregate");
  EvalReport r;
  r.condition = std::move(condition);
  r.method = std::move(method);
  r.per_subject = per_subject;
  std::vector<double> p, rm, ma;
  for (const auto& [id, m] : per_subject) {
    p.push_back(m.pte6);
    rm.push_back(m.rmse);
    ma.push_back(m.mae);
  }
  r.pte6 = mean_std(p);
  r.rmse = mean_std(rm);
  r.mae = mean_std(ma);
  return r;
}

namespace {

std::string pm(const MeanStd& v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.1f +- %.1f", v.mean, v.std);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_table(std::ostream& os, std::span<const EvalReport> reports) {
  os << std::left << std::setw(20) << "Condition" << std::setw(10) << "Method"
     << std::setw(16) << "PTE6 (%)" << std::setw(16) << "RMSE (bpm)" << std::setw(16)
     << "MAE (bpm)" << "\n";
  os << std::string(78, '-') << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(20) << r.condition << std::setw(10) << r.method
       << std::setw(16) << pm(r.pte6) << std::setw(16) << pm(r.rmse) << std::setw(16)
       << pm(r.mae) << "\n";
  }
}

void write_csv(std::ostream& os, std::span<const EvalReport> reports) {
  os << "condition,method,subject,pte6,rmse,mae,windows\n";
  for (const auto& r : reports) {
    for (const auto& [id, m] : r.per_subject) {
      os << r.condition << ',' << r.method << ',' << id << ',' << num(m.pte6) << ','
         << num(m.rmse) << ',' << num(m.mae) << ',' << m.windows << "\n";
    }
    os << r.condition << ',' << r.method << ",ALL_mean," << num(r.pte6.mean) << ','
       << num(r.rmse.mean) << ',' << num(r.mae.mean) << ',' << r.per_subject.size() << "\n";
    os << r.condition << ',' << r.method << ",ALL_std," << num(r.pte6.std) << ','
       << num(r.rmse.std) << ',' << num(r.mae.std) << ',' << r.per_subject.size() << "\n";
  }
}

void write_track_csv(std::ostream& os, const HrTrack& track) {
  os << "time_s,est_hr,label_hr\n";
  for (std::size_t i = 0; i < track.size(); ++i) {
    os << num(track.times.empty() ? 0.0 : track.times[i]) << ',' << num(track.est_hr[i]) << ','
       << num(track.label_hr[i]) << "\n";
  }
}

}  // namespace ippg
