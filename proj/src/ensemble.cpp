// SPDX-License-Identifier: Apache-2.0
#include "gradekit/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>

#include <json.hpp>

#include "gradekit/errors.hpp"
#include "gradekit/format.hpp"

namespace gradekit {

void GraderEnsemble::check() const {
  if (members.empty()) throw ShapeError("ensemble has no members");
  if (member_seeds.size() != members.size())
    throw ShapeError("ensemble seed list does not match its members");
  for (const auto& m : members)
    if (!(m.architecture() == members.front().architecture()))
      throw ShapeError("ensemble members have different architectures");
}

GraderEnsemble train_ensemble(const Dataset& dataset, const TrainConfig& cfg, int members,
                              std::uint64_t base_seed, unsigned threads) {
  if (members < 1) throw DataError("ensemble size must be at least 1");
  cfg.check();
  const PartSamples samples = collect_samples(dataset, cfg.part);
  const auto k_total = static_cast<std::size_t>(members);

  std::vector<std::optional<RegressionHead>> trained(k_total);
  std::vector<std::exception_ptr> errors(k_total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < k_total; k = next++) {
      try {
        TrainConfig member_cfg = cfg;
        member_cfg.seed = base_seed + k;
        RegressionHead initial =
            init_head(architecture_for(member_cfg, samples.inputs.rows()), member_cfg.seed,
                      member_cfg.dropout_rate);
        trained[k] = train(samples, member_cfg, std::move(initial)).head;
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned n_workers =
      std::clamp<unsigned>(threads, 1, static_cast<unsigned>(k_total));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  GraderEnsemble ensemble;
  ensemble.part = cfg.part;
  for (std::size_t k = 0; k < k_total; ++k) {
    ensemble.members.push_back(std::move(*trained[k]));
    ensemble.member_seeds.push_back(base_seed + k);
  }
  return ensemble;
}

Eigen::VectorXd predict_pooled(const GraderEnsemble& ensemble, const Eigen::MatrixXd& inputs) {
  ensemble.check();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(inputs.cols());
  for (const auto& head : ensemble.members) sum += predict_batch(head, inputs);
  return sum / static_cast<double>(ensemble.members.size());
}

Grade predict_part(const GraderEnsemble& ensemble, const Submission& sub) {
  auto it = sub.responses.find(ensemble.part);
  if (it == sub.responses.end() || it->second.empty())
    throw MissingPart("speaker '" + sub.speaker_id + "' has no response for part " +
                      std::string(to_string(ensemble.part)));
  const auto& seqs = it->second;
  Eigen::MatrixXd pooled(seqs.front().width(), static_cast<Eigen::Index>(seqs.size()));
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    if (seqs[r].width() != pooled.rows())
      throw ShapeError("responses of one part have different widths");
    pooled.col(static_cast<Eigen::Index>(r)) = mean_pool(seqs[r]);
  }
  return predict_pooled(ensemble, pooled).mean();
}

SubmissionPrediction predict_submission(const std::map<PartId, GraderEnsemble>& ensembles,
                                        const Submission& sub) {
  SubmissionPrediction out;
  for (PartId part : kAllParts) {
    auto it = ensembles.find(part);
    if (it == ensembles.end())
      throw MissingPart("no ensemble for part " + std::string(to_string(part)));
    out.parts[index_of(part)] = predict_part(it->second, sub);
  }
  out.overall = overall_grade(out.parts);
  return out;
}

void save_ensemble(const GraderEnsemble& ensemble, const std::filesystem::path& dir) {
  ensemble.check();
  nlohmann::ordered_json manifest;
  manifest["part"] = std::string(to_string(ensemble.part));
  manifest["members"] = ensemble.members.size();
  manifest["seeds"] = ensemble.member_seeds;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
    const std::string name = "member_" + std::to_string(k) + ".json";
    save_head(ensemble.members[k], dir / name);
    files.push_back(name);
  }
  manifest["files"] = files;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

GraderEnsemble load_ensemble(const std::filesystem::path& dir) {
  using nlohmann::json;
  GraderEnsemble ensemble;
  std::vector<std::string> files;
  try {
    json manifest = json::parse(read_file(dir / "manifest.json"));
    ensemble.part = parse_part(manifest.at("part").get<std::string>());
    ensemble.member_seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
    files = manifest.at("files").get<std::vector<std::string>>();
    if (manifest.at("members").get<std::size_t>() != files.size())
      throw ParseError("ensemble manifest member count disagrees with its file list");
  } catch (const json::exception& e) {
    throw ParseError("invalid ensemble manifest in " + dir.string() + ": " + e.what());
  }
  for (const auto& f : files) ensemble.members.push_back(load_head(dir / f));
  ensemble.check();
  return ensemble;
}

}  // namespace gradekit
