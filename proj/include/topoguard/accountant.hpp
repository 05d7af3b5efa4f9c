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

#ifndef TOPOGUARD_ACCOUNTANT_HPP_
#define TOPOGUARD_ACCOUNTANT_HPP_

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace topoguard {

struct SpendRecord {
  double ts = 0.0;       // unix seconds
  double eps = 0.0;
  double delta = 0.0;
  std::string tag;
};

struct ComposedTotals {
  double epsilon = 0.0;
  double delta = 0.0;
};

// Advanced composition over heterogeneous spends:
//   eps_total  = sum(eps_i) + sqrt(2 ln(1/delta')) * sqrt(sum(eps_i^2))
//   delta_total = sum(delta_i) + delta'
ComposedTotals compose_spends(const std::vector<SpendRecord>& spends,
                              double delta_prime);

// Specialization for t identical (eps_query, *) spends:
//   t * eps + eps * sqrt(2 t ln(1/delta')).
// compose_spends on t identical records reproduces this exactly.
double aggregate_epsilon(long t, double eps_query, double delta_prime);

struct BudgetReport {
  ComposedTotals totals;
  double budget_eps = 0.0;
  double budget_delta = 0.0;
  double remaining_eps = 0.0;
  double remaining_delta = 0.0;
  long spend_count = 0;
  // tag -> (sum of eps, count)
  std::map<std::string, std::pair<double, long>> per_tag;
  nlohmann::json to_json() const;
};

// Append-only privacy spend ledger with a SHA-256 hash chain.
//
// File format: one JSON object per line,
//   {"ts": ..., "eps": ..., "delta": ..., "tag": "...", "chain": "<hex>"}
// where chain = SHA256(previous_chain_hex || canonical record fields).
// A mid-file record whose chain does not verify means tampering and loading
// fails; a torn final line (crash during append) is dropped, restoring the
// pre-spend state.
class PrivacyLedger {
 public:
  // Opens or creates the ledger file, verifying the chain on load.
  PrivacyLedger(const std::string& path, double delta_prime, double budget_eps,
                double budget_delta);

  PrivacyLedger(const PrivacyLedger&) = delete;
  PrivacyLedger& operator=(const PrivacyLedger&) = delete;

  struct SpendOutcome {
    bool accepted = false;
    ComposedTotals totals;  // after the spend if accepted, current otherwise
  };

  // Atomic check-and-append: the spend is admitted only if the composed
  // totals including it stay within budget. Safe to call concurrently.
  SpendOutcome try_spend(double eps, double delta, const std::string& tag);

  ComposedTotals totals() const;
  BudgetReport report() const;
  std::vector<SpendRecord> records() const;
  long size() const;
  double delta_prime() const { return delta_prime_; }
  double budget_eps() const { return budget_eps_; }
  double budget_delta() const { return budget_delta_; }
  const std::string& path() const { return path_; }

 private:
  void load();
  mutable std::mutex mu_;
  std::string path_;
  double delta_prime_;
  double budget_eps_;
  double budget_delta_;
  std::vector<SpendRecord> records_;
  std::string last_chain_;
};

std::string sha256_hex(const std::string& data);

}  // namespace topoguard

#endif  // TOPOGUARD_ACCOUNTANT_HPP_
