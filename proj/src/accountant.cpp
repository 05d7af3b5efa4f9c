//
// Copyright 2026 The Topoguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "topoguard/accountant.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "topoguard/errors.hpp"

namespace topoguard {

namespace {

void check_spend_values(double eps, double delta) {
  if (eps < 0.0 || !std::isfinite(eps)) {
    throw InvalidParameter("spend eps must be nonnegative and finite");
  }
  if (delta < 0.0 || delta >= 1.0) {
    throw InvalidParameter("spend delta must lie in [0, 1)");
  }
}

void check_delta_prime(double delta_prime) {
  if (!(delta_prime > 0.0) || !(delta_prime < 1.0)) {
    throw InvalidParameter("delta_prime must lie in (0, 1)");
  }
}

// Canonical byte string the chain hashes over. %.17g round-trips doubles,
// so reloading a file reproduces the same bytes.
std::string canonical_record(const SpendRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.17g|%.17g|%.17g|", r.ts, r.eps, r.delta);
  return std::string(buf) + r.tag;
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw PersistenceError("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xF];
  }
  return out;
}

ComposedTotals compose_spends(const std::vector<SpendRecord>& spends,
                              double delta_prime) {
  check_delta_prime(delta_prime);
  double eps_sum = 0.0, eps_sq_sum = 0.0, delta_sum = 0.0;
  for (const auto& s : spends) {
    check_spend_values(s.eps, s.delta);
    eps_sum += s.eps;
    eps_sq_sum += s.eps * s.eps;
    delta_sum += s.delta;
  }
  ComposedTotals totals;
  totals.epsilon = eps_sum + std::sqrt(2.0 * std::log(1.0 / delta_prime)) *
                                 std::sqrt(eps_sq_sum);
  totals.delta = delta_sum + delta_prime;
  return totals;
}

double aggregate_epsilon(long t, double eps_query, double delta_prime) {
  if (t < 0) throw InvalidParameter("t must be nonnegative");
  check_delta_prime(delta_prime);
  check_spend_values(eps_query, 0.0);
  double td = static_cast<double>(t);
  return td * eps_query +
         eps_query * std::sqrt(2.0 * td * std::log(1.0 / delta_prime));
}

nlohmann::json BudgetReport::to_json() const {
  nlohmann::json j;
  j["epsilon_total"] = totals.epsilon;
  j["delta_total"] = totals.delta;
  j["budget_eps"] = budget_eps;
  j["budget_delta"] = budget_delta;
  j["remaining_eps"] = remaining_eps;
  j["remaining_delta"] = remaining_delta;
  j["spend_count"] = spend_count;
  nlohmann::json tags = nlohmann::json::object();
  for (const auto& [tag, agg] : per_tag) {
    tags[tag] = {{"eps_sum", agg.first}, {"count", agg.second}};
  }
  j["per_tag"] = std::move(tags);
  return j;
}

PrivacyLedger::PrivacyLedger(const std::string& path, double delta_prime,
                             double budget_eps, double budget_delta)
    : path_(path),
      delta_prime_(delta_prime),
      budget_eps_(budget_eps),
      budget_delta_(budget_delta) {
  check_delta_prime(delta_prime);
  if (budget_eps < 0.0 || budget_delta < 0.0) {
    throw InvalidParameter("budgets must be nonnegative");
  }
  if (!std::filesystem::exists(path_)) {
    std::ofstream touch(path_, std::ios::app);
    if (!touch) throw PersistenceError("cannot create ledger at " + path_);
  }
  load();
}

void PrivacyLedger::load() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw PersistenceError("cannot open ledger at " + path_);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  in.close();

  records_.clear();
  last_chain_.clear();

  size_t pos = 0;
  size_t line_start = 0;
  bool torn_tail = false;
  std::vector<std::string> lines;
  while (pos < content.size()) {
    size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      // No terminating newline: an interrupted append. Remember where it
      // starts so the file can be truncated back to the last good record.
      line_start = pos;
      torn_tail = true;
      break;
    }
    if (nl > pos) lines.push_back(content.substr(pos, nl - pos));
    pos = nl + 1;
    line_start = pos;
  }

  for (size_t k = 0; k < lines.size(); ++k) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[k]);
    } catch (const nlohmann::json::exception&) {
      throw PersistenceError("ledger line " + std::to_string(k + 1) +
                             " is not valid JSON");
    }
    SpendRecord r;
    std::string chain;
    try {
      r.ts = j.at("ts").get<double>();
      r.eps = j.at("eps").get<double>();
      r.delta = j.at("delta").get<double>();
      r.tag = j.at("tag").get<std::string>();
      chain = j.at("chain").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw PersistenceError("ledger line " + std::to_string(k + 1) +
                             " is missing fields");
    }
    std::string expect = sha256_hex(last_chain_ + canonical_record(r));
    if (chain != expect) {
      throw PersistenceError("ledger hash chain broken at line " +
                             std::to_string(k + 1));
    }
    records_.push_back(std::move(r));
    last_chain_ = std::move(chain);
  }

  if (torn_tail) {
    std::filesystem::resize_file(path_, line_start);
  }
}

PrivacyLedger::SpendOutcome PrivacyLedger::try_spend(double eps, double delta,
                                                     const std::string& tag) {
  check_spend_values(eps, delta);
  if (tag.empty()) throw InvalidParameter("spend tag must be nonempty");

  std::lock_guard<std::mutex> lock(mu_);
  SpendRecord r;
  r.ts = std::chrono::duration<double>(
             std::chrono::system_clock::now().time_since_epoch())
             .count();
  r.eps = eps;
  r.delta = delta;
  r.tag = tag;

  std::vector<SpendRecord> candidate = records_;
  candidate.push_back(r);
  ComposedTotals after = compose_spends(candidate, delta_prime_);
  if (after.epsilon > budget_eps_ || after.delta > budget_delta_) {
    return {false, compose_spends(records_, delta_prime_)};
  }

  std::string chain = sha256_hex(last_chain_ + canonical_record(r));
  nlohmann::json j;
  j["ts"] = r.ts;
  j["eps"] = r.eps;
  j["delta"] = r.delta;
  j["tag"] = r.tag;
  j["chain"] = chain;

  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw PersistenceError("cannot append to ledger at " + path_);
  out << j.dump() << '\n';
  out.flush();
  if (!out) throw PersistenceError("ledger append failed at " + path_);

  records_.push_back(std::move(r));
  last_chain_ = std::move(chain);
  return {true, after};
}

ComposedTotals PrivacyLedger::totals() const {
  std::lock_guard<std::mutex> lock(mu_);
  return compose_spends(records_, delta_prime_);
}

BudgetReport PrivacyLedger::report() const {
  std::lock_guard<std::mutex> lock(mu_);
  BudgetReport rep;
  rep.totals = compose_spends(records_, delta_prime_);
  rep.budget_eps = budget_eps_;
  rep.budget_delta = budget_delta_;
  rep.remaining_eps = std::max(0.0, budget_eps_ - rep.totals.epsilon);
  rep.remaining_delta = std::max(0.0, budget_delta_ - rep.totals.delta);
  rep.spend_count = static_cast<long>(records_.size());
  for (const auto& r : records_) {
    auto& agg = rep.per_tag[r.tag];
    agg.first += r.eps;
    agg.second += 1;
  }
  return rep;
}

std::vector<SpendRecord> PrivacyLedger::records() const {
  std::lock_guard<std::mutex> lock(mu_);
  return records_;
}

long PrivacyLedger::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<long>(records_.size());
}

}  // namespace topoguard
