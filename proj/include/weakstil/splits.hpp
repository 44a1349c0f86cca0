#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "weakstil/core.hpp"
#include "weakstil/random.hpp"

namespace weakstil {

enum class SplitRole : std::uint8_t { Train, Val, Test };

inline char role_letter(SplitRole r) {
  switch (r) {
    case SplitRole::Train: return 'T';
    case SplitRole::Val: return 'V';
    case SplitRole::Test: return 'E';
  }
  return '?';
}

struct PatientStratum {
  std::string patient_id;
  std::string stratum;
};

/// Patient-level role assignment for each of k rotated folds.
struct SplitPlan {
  std::size_t k = 5;
  std::vector<std::string> patient_ids;        // sorted
  std::vector<std::vector<SplitRole>> roles;   // roles[patient][fold]

  std::ptrdiff_t index_of(const std::string& patient_id) const {
    auto it = std::lower_bound(patient_ids.begin(), patient_ids.end(), patient_id);
    if (it == patient_ids.end() || *it != patient_id) return -1;
    return it - patient_ids.begin();
  }

  std::vector<std::string> patients_in(std::size_t fold, SplitRole role) const {
    std::vector<std::string> out;
    for (std::size_t p = 0; p < patient_ids.size(); ++p)
      if (roles[p][fold] == role) out.push_back(patient_ids[p]);
    return out;
  }

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Stratified, rotated k-fold plan.
///
/// Patients are grouped by stratum (strata in lexicographic order, patients
/// sorted then shuffled within their stratum) and dealt round-robin into k
/// base folds. The dealing cursor carries over between strata so base fold
/// sizes differ by at most one overall and per stratum. Fold i uses base fold i
/// as test, base fold (i+1) mod k as validation, and the rest as training.
inline SplitPlan stratified_kfold(std::vector<PatientStratum> patients, std::size_t k, std::uint64_t seed) {
  if (k < 3) throw ValidationError("k must be ≥ 3");
  std::map<std::string, std::string> stratum_of;
  for (const auto& p : patients) {
    if (p.patient_id.empty()) throw ValidationError("empty patient_id");
    auto [it, inserted] = stratum_of.emplace(p.patient_id, p.stratum);
    if (!inserted && it->second != p.stratum)
      throw ValidationError("patient '" + p.patient_id + "' listed under two strata");
  }
  if (stratum_of.size() < k)
    throw ValidationError("need at least k=" + std::to_string(k) + " patients, got " +
                          std::to_string(stratum_of.size()));

  std::map<std::string, std::vector<std::string>> by_stratum;
  for (const auto& [pid, stratum] : stratum_of) by_stratum[stratum].push_back(pid);

  Rng rng(seed);
  std::map<std::string, std::size_t> base_fold;
  std::size_t cursor = 0;
  for (auto& [stratum, members] : by_stratum) {
    rng.shuffle(members);
    for (const auto& pid : members) {
      base_fold[pid] = cursor;
      cursor = (cursor + 1) % k;
    }
  }

  SplitPlan plan;
  plan.k = k;
  for (const auto& [pid, base] : base_fold) {
    plan.patient_ids.push_back(pid);
    std::vector<SplitRole> r(k, SplitRole::Train);
    for (std::size_t fold = 0; fold < k; ++fold) {
      if (base == fold)
        r[fold] = SplitRole::Test;
      else if (base == (fold + 1) % k)
        r[fold] = SplitRole::Val;
    }
    plan.roles.push_back(std::move(r));
  }
  return plan;
}

inline SplitPlan stratified_kfold(std::span<const FeatureBag> bags, std::size_t k, std::uint64_t seed) {
  std::vector<PatientStratum> patients;
  for (const auto& b : bags) patients.push_back({b.patient_id, b.stratum});
  return stratified_kfold(std::move(patients), k, seed);
}

struct FoldSets {
  BagRefs train;
  BagRefs val;
  BagRefs test;
};

/// Routes every bag (all slides of a patient together) to its role in `fold`.
inline FoldSets materialize(const SplitPlan& plan, std::size_t fold, std::span<const FeatureBag> bags) {
  if (fold >= plan.k)
    throw ValidationError("fold index " + std::to_string(fold) + " out of range for k=" + std::to_string(plan.k));
  FoldSets out;
  std::vector<std::string> unknown;
  for (const FeatureBag& bag : bags) {
    const auto p = plan.index_of(bag.patient_id);
    if (p < 0) {
      unknown.push_back(bag.patient_id);
      continue;
    }
    switch (plan.roles[static_cast<std::size_t>(p)][fold]) {
      case SplitRole::Train: out.train.emplace_back(bag); break;
      case SplitRole::Val: out.val.emplace_back(bag); break;
      case SplitRole::Test: out.test.emplace_back(bag); break;
    }
  }
  if (!unknown.empty()) {
    std::string msg = "patients not in split plan:";
    for (const auto& u : unknown) msg += " " + u;
    throw ValidationError(msg);
  }
  if (out.train.empty() || out.val.empty() || out.test.empty())
    throw ValidationError("empty split role in fold " + std::to_string(fold));
  return out;
}

/// `patient_id,fold0,...` with role letters T (train), V (validation), E (test).
inline void write_split_csv(std::ostream& os, const SplitPlan& plan) {
  os << "patient_id";
  for (std::size_t f = 0; f < plan.k; ++f) os << ",fold" << f;
  os << '\n';
  for (std::size_t p = 0; p < plan.patient_ids.size(); ++p) {
    os << plan.patient_ids[p];
    for (std::size_t f = 0; f < plan.k; ++f) os << ',' << role_letter(plan.roles[p][f]);
    os << '\n';
  }
}

/// Parses a pinned plan; every patient must be tested exactly once.
inline SplitPlan read_split_csv(std::istream& is) {
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
  };
  auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };

  std::string line;
  if (!std::getline(is, line)) throw ValidationError("split plan: missing header");
  strip_cr(line);
  const auto header = split(line);
  if (header.size() < 4 || header[0] != "patient_id") throw ValidationError("split plan: bad header");
  SplitPlan plan;
  plan.k = header.size() - 1;
  for (std::size_t f = 0; f < plan.k; ++f)
    if (header[f + 1] != "fold" + std::to_string(f)) throw ValidationError("split plan: bad header column " + header[f + 1]);

  std::vector<std::pair<std::string, std::vector<SplitRole>>> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != plan.k + 1)
      throw ValidationError("split plan line " + std::to_string(line_no) + ": expected " +
                            std::to_string(plan.k + 1) + " fields");
    std::vector<SplitRole> r;
    std::size_t tests = 0;
    for (std::size_t f = 0; f < plan.k; ++f) {
      const std::string& v = fields[f + 1];
      if (v == "T") r.push_back(SplitRole::Train);
      else if (v == "V") r.push_back(SplitRole::Val);
      else if (v == "E") { r.push_back(SplitRole::Test); ++tests; }
      else throw ValidationError("split plan line " + std::to_string(line_no) + ": bad role '" + v + "'");
    }
    if (tests != 1)
      throw ValidationError("split plan line " + std::to_string(line_no) + ": patient must be tested exactly once");
    rows.emplace_back(fields[0], std::move(r));
  }
  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first == rows[i - 1].first)
      throw ValidationError("split plan: duplicate patient '" + rows[i].first + "'");
    plan.patient_ids.push_back(rows[i].first);
    plan.roles.push_back(rows[i].second);
  }
  if (plan.patient_ids.empty()) throw ValidationError("split plan: no patients");
  return plan;
}

}  // namespace weakstil
