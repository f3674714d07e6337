// Simulates a small observational study with four subgroups, one of which
// benefits from treatment, and reports inference on the largest effect.

#include <iostream>

#include "sgdebias/sgdebias.hpp"

int main() {
  using namespace sgdebias;

  SubgroupSimDesign design = SubgroupSimDesign::heterogeneous(1500, 4, 30);
  design.seed = 11;
  const RawData raw = gen_subgroup_records(design);
  const EncodedDesign data = encode(raw, validate_subgroups(raw));

  AnalysisConfig cfg;
  cfg.pipeline.plan.splits = 100;
  cfg.pipeline.boot.replicates = 500;
  cfg.pipeline.boot.r = 0.15;
  cfg.auto_r = false;
  cfg.seed = 2024;

  const AnalysisReport report = run_analysis(data, cfg);
  std::cout << to_text(report, "demo");
}
