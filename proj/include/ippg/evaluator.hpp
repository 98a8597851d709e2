#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace ippg {

struct HrTrack {
  std::string subject_id;
  std::string condition;  // e.g. "garage_still"
  std::vector<double> times;
  std::vector<double> est_hr;
  std::vector<double> label_hr;

  std::size_t size() const { return est_hr.size(); }
  void validate() const;
};

inline constexpr double kPteThreshold = 6.0;

// Percent of windows with |est - label| strictly below threshold.
double pte6(const HrTrack& track, double threshold = kPteThreshold);
double rmse(const HrTrack& track);
double mae(const HrTrack& track);

struct SubjectMetrics {
  double pte6 = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t windows = 0;
};

SubjectMetrics subject_metrics(const HrTrack& track);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std
};

MeanStd mean_std(std::span<const double> values);

struct EvalReport {
  std::string condition;
  std::string method;
  std::map<std::string, SubjectMetrics> per_subject;
  MeanStd pte6;
  MeanStd rmse;
  MeanStd mae;
};

// Unweighted mean and population std over subjects.
EvalReport aggregate(const std::map<std::string, SubjectMetrics>& per_subject,
                     std::string condition = {}, std::string method = {});

// Aligned text table, one row per report (condition/method), mean +- std.
void write_table(std::ostream& os, std::span<const EvalReport> reports);
// Machine-readable rows: condition,method,subject,pte6,rmse,mae,windows
// with subject "ALL_mean"/"ALL_std" for the aggregate rows.
void write_csv(std::ostream& os, std::span<const EvalReport> reports);
// Per-window HR track CSV: time_s,est_hr,label_hr
void write_track_csv(std::ostream& os, const HrTrack& track);

}  // namespace ippg
