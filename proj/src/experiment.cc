// Copyright 2026 The batchloop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "batchloop/experiment.h"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

namespace batchloop {
namespace {

namespace fs = std::filesystem;

std::string RefStateName(int index) {
  switch (index) {
    case kCa: return "C_A";
    case kCb: return "C_B";
    case kTemp: return "T";
    case kJacketTemp: return "T_J";
  }
  return "?";
}

int RefStateFromName(const std::string& name, const std::string& path) {
  for (int i = 0; i < kStateDim; ++i) {
    if (RefStateName(i) == name) return i;
  }
  throw ConfigError(path, "expected one of C_A, C_B, T, T_J");
}

void ReadReactor(const Json& j, ReactorParams* p) {
  JsonObjectReader r(j, "reactor");
  r.Read("alpha1", &p->alpha1);
  r.Read("alpha2", &p->alpha2);
  r.Read("e1", &p->e1);
  r.Read("e2", &p->e2);
  r.Read("r_gas", &p->r_gas);
  r.Read("volume", &p->volume);
  r.Read("jacket_volume", &p->jacket_volume);
  r.Read("lambda1", &p->lambda1);
  r.Read("lambda2", &p->lambda2);
  r.Read("cp", &p->cp);
  r.Read("cp_jacket", &p->cp_jacket);
  r.Read("rho", &p->rho);
  r.Read("rho_jacket", &p->rho_jacket);
  r.Read("area", &p->area);
  r.Read("h_ow", &p->h_ow);
  r.Read("tj0_nominal", &p->tj0_nominal);
  r.Read("tj0_actual", &p->tj0_actual);
  r.Read("kinetic_time_base_s", &p->kinetic_time_base_s);
  r.Finish();
}

Json ReactorToJson(const ReactorParams& p) {
  return Json{{"alpha1", p.alpha1},
              {"alpha2", p.alpha2},
              {"e1", p.e1},
              {"e2", p.e2},
              {"r_gas", p.r_gas},
              {"volume", p.volume},
              {"jacket_volume", p.jacket_volume},
              {"lambda1", p.lambda1},
              {"lambda2", p.lambda2},
              {"cp", p.cp},
              {"cp_jacket", p.cp_jacket},
              {"rho", p.rho},
              {"rho_jacket", p.rho_jacket},
              {"area", p.area},
              {"h_ow", p.h_ow},
              {"tj0_nominal", p.tj0_nominal},
              {"tj0_actual", p.tj0_actual},
              {"kinetic_time_base_s", p.kinetic_time_base_s}};
}

void ReadPair(JsonObjectReader& r, const std::string& key, double* lo,
              double* hi) {
  std::vector<double> pair{*lo, *hi};
  r.Read(key, &pair);
  if (pair.size() != 2) throw ConfigError(r.ChildPath(key), "expected [lo, hi]");
  *lo = pair[0];
  *hi = pair[1];
}

void ReadRto(const Json& j, RtoConfig* c) {
  JsonObjectReader r(j, "rto");
  r.Read("cb_setpoint", &c->cb_setpoint);
  r.Read("flow_cost", &c->flow_cost);
  ReadPair(r, "u_bounds", &c->u_min, &c->u_max);
  ReadPair(r, "t_bounds", &c->t_min, &c->t_max);
  r.Read("max_iters", &c->max_iters);
  r.Read("step_size", &c->step_size);
  r.Read("fd_step", &c->fd_step);
  r.Read("temp_penalty_weight", &c->temp_penalty_weight);
  r.Read("u_init", &c->u_init);
  r.Read("gradient_tolerance", &c->gradient_tolerance);
  r.Read("stall_window", &c->stall_window);
  r.Read("stall_threshold", &c->stall_threshold);
  r.Finish();
}

Json RtoToJson(const RtoConfig& c) {
  return Json{{"cb_setpoint", c.cb_setpoint},
              {"flow_cost", c.flow_cost},
              {"u_bounds", {c.u_min, c.u_max}},
              {"t_bounds", {c.t_min, c.t_max}},
              {"max_iters", c.max_iters},
              {"step_size", c.step_size},
              {"fd_step", c.fd_step},
              {"temp_penalty_weight", c.temp_penalty_weight},
              {"u_init", c.u_init},
              {"gradient_tolerance", c.gradient_tolerance},
              {"stall_window", c.stall_window},
              {"stall_threshold", c.stall_threshold}};
}

void ReadEpisodes(const Json* j, const std::string& path, int* n) {
  if (!j) return;
  JsonObjectReader r(*j, path);
  r.Read("n_episodes", n);
  r.Finish();
}

std::string TimestampUtc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string EpisodeName(const std::string& prefix, int index) {
  std::ostringstream out;
  out << prefix << std::setw(4) << std::setfill('0') << index << ".json";
  return out.str();
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " +
                        ec.message());
}

std::ofstream OpenCsv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void CloseCsv(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

void WriteRecords(const fs::path& dir, const std::vector<BatchRecord>& records) {
  EnsureDir(dir / "records");
  for (const auto& r : records) {
    WriteJsonFile((dir / "records" / EpisodeName("batch_", r.batch)).string(),
                  BatchRecordToJson(r));
  }
}

void WriteIlcCurve(const fs::path& path,
                   const std::vector<BatchRecord>& records) {
  std::ofstream out = OpenCsv(path);
  out << "batch,mse,terminal_C_B,trace_p\n";
  for (const auto& r : records) {
    out << r.batch << ',' << FormatDouble(r.mse) << ','
        << FormatDouble(r.terminal_cb) << ','
        << FormatDouble(r.informer ? r.informer->trace_p : 0.0) << '\n';
  }
  CloseCsv(out, path);
}

void WriteImitationCurve(const fs::path& path,
                         const std::vector<BatchRecord>& records) {
  std::ofstream out = OpenCsv(path);
  out << "episode,mean_imitation_gap\n";
  for (const auto& r : records) {
    out << r.batch << ',' << FormatDouble(r.mean_imitation_gap) << '\n';
  }
  CloseCsv(out, path);
}

double MeanOf(const std::vector<BatchRecord>& records, std::size_t begin,
              std::size_t end, double BatchRecord::*field) {
  double sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) sum += records[i].*field;
  return end > begin ? sum / static_cast<double>(end - begin) : 0.0;
}

// Mean of `field` over the first and last `fraction` of the records.
std::pair<double, double> HeadTailMeans(const std::vector<BatchRecord>& r,
                                        std::size_t window,
                                        double BatchRecord::*field) {
  const std::size_t n = r.size();
  const std::size_t w = std::max<std::size_t>(1, std::min(window, n));
  return {MeanOf(r, 0, w, field), MeanOf(r, n - w, n, field)};
}

EpisodeHook CheckpointHook(const fs::path& dir, const std::string& prefix,
                           int every) {
  if (every <= 0) return nullptr;
  return [dir, prefix, every](const BatchRecord& r, PpoAgent& agent) {
    if (r.batch % every != 0) return;
    EnsureDir(dir / "checkpoints");
    WriteJsonFile((dir / "checkpoints" / EpisodeName(prefix, r.batch)).string(),
                  agent.ToJson());
  };
}

struct RunContext {
  const ExperimentConfig& cfg;
  std::uint64_t seed;
  fs::path dir;
  NominalTrajectory nominal;
  IlcSetup setup;
  Json summary = Json::object();

  NoiseConfig Noise(std::uint64_t stream) const {
    NoiseConfig n = cfg.noise;
    n.seed = DeriveSeed(seed, stream);
    return n;
  }
  double InletOffset() const {
    return cfg.reactor.tj0_actual - cfg.reactor.tj0_nominal;
  }
};

LiftedBatchModel BuildOrLoadModel(const ExperimentConfig& cfg,
                                  const NominalTrajectory& nominal) {
  const auto build = [&] {
    return BuildLifted(
        Linearize(nominal.x_nom, nominal.u_nom, cfg.grid, cfg.reactor));
  };
  if (cfg.lifted_model_cache.empty()) return build();
  const fs::path cache(cfg.lifted_model_cache);
  if (fs::exists(cache)) {
    LiftedBatchModel model = LiftedModelFromJson(ReadJsonFile(cache.string()));
    if (model.ltv.nominal_x == nominal.x_nom &&
        model.ltv.nominal_u == nominal.u_nom) {
      return model;
    }
    LogWarning("lifted model cache does not match the nominal; rebuilding");
  }
  LiftedBatchModel model = build();
  if (cache.has_parent_path()) EnsureDir(cache.parent_path());
  WriteJsonFile(cache.string(), LiftedModelToJson(model));
  return model;
}

void PrepareNominal(RunContext& ctx, bool need_model) {
  RtoConfig rto = ctx.cfg.rto;
  rto.volume = ctx.cfg.reactor.volume;
  ctx.nominal = OptimizeNominal(rto, ctx.cfg.reactor, ctx.cfg.grid);
  WriteNominal(ctx.dir.string(), ctx.nominal, rto, ctx.cfg.grid);
  ctx.summary["rto"] = {
      {"objective", ctx.nominal.objective},
      {"terminal_C_B", ctx.nominal.x_nom(ctx.nominal.x_nom.rows() - 1, kCb)},
      {"iterations", ctx.nominal.iterations},
      {"termination", ToString(ctx.nominal.termination)},
      {"temperature_within_bounds", ctx.nominal.temperature_within_bounds}};
  if (!need_model) return;
  ctx.setup.model = BuildOrLoadModel(ctx.cfg, ctx.nominal);
  ctx.setup.covariances = NoiseCovariances::FromNoiseConfig(
      ctx.cfg.noise, kDisturbanceDim, kObservationDim, kQualityDim);
  ctx.setup.objective =
      IlcObjective::ForReactor(ctx.setup.model, ctx.nominal.x_nom, rto);
  ctx.setup.config = ctx.cfg.kf_ilc;
}

void RunIlc(RunContext& ctx) {
  ReactorPlant plant(ctx.cfg.reactor, ctx.cfg.grid,
                     ctx.Noise(kPlantNoiseStream));
  HierarchicalIlc informer = ctx.setup.MakeInformer();
  const auto records = RunIlcCampaign(informer, plant, ctx.cfg.ilc_batches);
  WriteRecords(ctx.dir, records);
  WriteIlcCurve(ctx.dir / "ilc_curve.csv", records);
  ctx.summary["ilc"] = {{"batches", records.size()},
                        {"mse_first", records.front().mse},
                        {"mse_last", records.back().mse},
                        {"terminal_C_B_first", records.front().terminal_cb},
                        {"terminal_C_B_last", records.back().terminal_cb}};
}

// Pre-trains a fresh agent against the surrogate; artifacts go to `dir`.
PpoAgent RunPretrain(RunContext& ctx, const fs::path& dir) {
  EnsureDir(dir);
  PpoAgent agent(ctx.cfg.agent_state.dim(), ctx.cfg.ppo,
                 DeriveSeed(ctx.seed, kAgentStream));
  HierarchicalIlc informer = ctx.setup.MakeInformer();
  LtvProcess surrogate(ctx.setup.model.ltv, ctx.InletOffset(),
                       ctx.Noise(kSurrogateNoiseStream));
  const std::int64_t plant_steps_before = ReactorPlant::TotalSteps();
  const auto records = PretrainOffline(
      agent, informer, surrogate, ctx.cfg.pretrain_episodes,
      ctx.cfg.agent_state,
      CheckpointHook(dir, "pretrain_episode_", ctx.cfg.checkpoint_every));
  const std::int64_t plant_steps =
      ReactorPlant::TotalSteps() - plant_steps_before;
  WriteRecords(dir, records);
  WriteLearningCurveCsv((dir / "learning_curve.csv").string(), records);
  WriteImitationCurve(dir / "imitation_curve.csv", records);
  EnsureDir(dir / "checkpoints");
  WriteJsonFile((dir / "checkpoints" / "pretrain_final.json").string(),
                agent.ToJson());
  const auto [gap_first, gap_last] =
      HeadTailMeans(records, 10, &BatchRecord::mean_imitation_gap);
  ctx.summary["pretrain"] = {{"episodes", records.size()},
                             {"imitation_gap_first10", gap_first},
                             {"imitation_gap_last10", gap_last},
                             {"plant_steps", plant_steps}};
  return agent;
}

std::vector<BatchRecord> RunOnline(RunContext& ctx, PpoAgent& agent,
                                   const fs::path& dir, int n_episodes) {
  EnsureDir(dir);
  ReactorPlant plant(ctx.cfg.reactor, ctx.cfg.grid,
                     ctx.Noise(kPlantNoiseStream));
  HierarchicalIlc informer = ctx.setup.MakeInformer();
  OnlineOptions options = ctx.cfg.online;
  options.n_episodes = n_episodes;
  auto records = TrainOnline(
      agent, informer, plant, ctx.cfg.reward, ctx.cfg.fusion, options,
      ctx.cfg.agent_state,
      CheckpointHook(dir, "online_episode_", ctx.cfg.checkpoint_every));
  WriteRecords(dir, records);
  WriteLearningCurveCsv((dir / "learning_curve.csv").string(), records);
  EnsureDir(dir / "checkpoints");
  WriteJsonFile((dir / "checkpoints" / "online_final.json").string(),
                agent.ToJson());
  const std::size_t window = std::max<std::size_t>(1, records.size() / 10);
  const auto [theta_first, theta_last] =
      HeadTailMeans(records, window, &BatchRecord::mean_theta);
  ctx.summary["online"] = {{"episodes", records.size()},
                           {"mse_episode1", records.front().mse},
                           {"mse_last", records.back().mse},
                           {"mean_theta_first10pct", theta_first},
                           {"mean_theta_last10pct", theta_last}};
  return records;
}

std::vector<BatchRecord> RunBaseline(RunContext& ctx, const fs::path& dir,
                                     int n_episodes) {
  EnsureDir(dir);
  PpoAgent agent(kObservationDim, ctx.cfg.ppo,
                 DeriveSeed(ctx.seed, kAgentStream));
  ReactorPlant plant(ctx.cfg.reactor, ctx.cfg.grid,
                     ctx.Noise(kPlantNoiseStream));
  auto records = TrainBaselinePpo(
      agent, plant, ctx.nominal.x_nom, ctx.cfg.reward, n_episodes,
      CheckpointHook(dir, "baseline_episode_", ctx.cfg.checkpoint_every));
  WriteRecords(dir, records);
  WriteLearningCurveCsv((dir / "learning_curve.csv").string(), records);
  ctx.summary["baseline"] = {{"episodes", records.size()},
                             {"mse_episode1", records.front().mse},
                             {"mse_last", records.back().mse}};
  return records;
}

void RunCompare(RunContext& ctx) {
  const int n = ctx.cfg.compare_episodes;
  PpoAgent agent = RunPretrain(ctx, ctx.dir / "pretrain");
  const auto online = RunOnline(ctx, agent, ctx.dir / "ilcirl", n);
  const auto baseline = RunBaseline(ctx, ctx.dir / "baseline", n);
  const fs::path path = ctx.dir / "comparison.csv";
  std::ofstream out = OpenCsv(path);
  out << "episode,seed,ilcirl_mse,baseline_mse\n";
  const std::size_t rows = std::max(online.size(), baseline.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << (i + 1) << ',' << ctx.seed << ','
        << (i < online.size() ? FormatDouble(online[i].mse) : "") << ','
        << (i < baseline.size() ? FormatDouble(baseline[i].mse) : "") << '\n';
  }
  CloseCsv(out, path);
  ctx.summary["compare"] = {{"ilcirl_mse_episode1", online.front().mse},
                            {"baseline_mse_episode1", baseline.front().mse}};
}

std::vector<std::string> ListArtifacts(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files.push_back(fs::relative(entry.path(), dir).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::string ToString(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kRto: return "rto";
    case ExperimentKind::kIlc: return "ilc";
    case ExperimentKind::kPretrain: return "pretrain";
    case ExperimentKind::kOnline: return "online";
    case ExperimentKind::kBaseline: return "baseline";
    case ExperimentKind::kCompare: return "compare";
  }
  return "?";
}

ExperimentKind ExperimentKindFromString(const std::string& name) {
  for (auto kind : {ExperimentKind::kRto, ExperimentKind::kIlc,
                    ExperimentKind::kPretrain, ExperimentKind::kOnline,
                    ExperimentKind::kBaseline, ExperimentKind::kCompare}) {
    if (ToString(kind) == name) return kind;
  }
  throw ConfigError("kind", "unknown experiment kind \"" + name + "\"");
}

void ExperimentConfig::Validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version", "unsupported schema version " +
                                            std::to_string(schema_version));
  }
  if (seeds.empty()) throw ConfigError("seeds", "needs at least one seed");
  if (checkpoint_every < 0) {
    throw ConfigError("checkpoint_every", "must be >= 0");
  }
  reactor.Validate();
  grid.Validate();
  noise.Validate();
  RtoConfig rto_check = rto;
  rto_check.volume = reactor.volume;
  rto_check.Validate();
  if (!(kf_ilc.p0 > 0.0)) throw ConfigError("kf_ilc.p0", "must be positive");
  if (kf_ilc.qp_max_iters < 1) {
    throw ConfigError("kf_ilc.qp_max_iters", "must be >= 1");
  }
  if (!(kf_ilc.qp_tolerance > 0.0)) {
    throw ConfigError("kf_ilc.qp_tolerance", "must be positive");
  }
  if (ilc_batches < 1) throw ConfigError("kf_ilc.n_batches", "must be >= 1");
  ppo.Validate();
  if (!(ppo.action_low >= kFlowMin && ppo.action_high <= kFlowMax)) {
    throw ConfigError("ppo.action_high",
                      "agent actions must stay within [0, 10] L/s");
  }
  reward.Validate();
  fusion.Validate();
  if (pretrain_episodes < 1) {
    throw ConfigError("pretrain.n_episodes", "must be >= 1");
  }
  if (online.n_episodes < 1) {
    throw ConfigError("online.n_episodes", "must be >= 1");
  }
  if (online.early_stop_window < 1) {
    throw ConfigError("online.early_stop_window", "must be >= 1");
  }
  if (online.forced_theta &&
      !(*online.forced_theta >= 0.0 && *online.forced_theta <= 1.0)) {
    throw ConfigError("online.forced_theta", "must lie in [0, 1]");
  }
  if (baseline_episodes < 1) {
    throw ConfigError("baseline.n_episodes", "must be >= 1");
  }
  if (compare_episodes < 1) {
    throw ConfigError("compare.n_episodes", "must be >= 1");
  }
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return ConfigToJson(a) == ConfigToJson(b);
}

Json ConfigToJson(const ExperimentConfig& c) {
  Json seeds = Json::array();
  for (auto s : c.seeds) seeds.push_back(s);
  return Json{
      {"schema_version", c.schema_version},
      {"kind", ToString(c.kind)},
      {"seeds", seeds},
      {"output_dir", c.output_dir},
      {"checkpoint_every", c.checkpoint_every},
      {"lifted_model_cache", c.lifted_model_cache},
      {"reactor", ReactorToJson(c.reactor)},
      {"grid",
       {{"t_f_s", c.grid.t_f},
        {"n_steps", c.grid.n_steps},
        {"dt_sub_s", c.grid.dt_sub}}},
      {"noise",
       {{"var_v", c.noise.var_v},
        {"var_w", c.noise.var_w},
        {"var_m", c.noise.var_m},
        {"var_n", c.noise.var_n}}},
      {"rto", RtoToJson(c.rto)},
      {"kf_ilc",
       {{"p0", c.kf_ilc.p0},
        {"qp_max_iters", c.kf_ilc.qp_max_iters},
        {"qp_tolerance", c.kf_ilc.qp_tolerance},
        {"n_batches", c.ilc_batches}}},
      {"ppo", PpoHyperparamsToJson(c.ppo)},
      {"agent_state", {{"append_last_action", c.agent_state.append_last_action}}},
      {"reward",
       {{"alpha", c.reward.alpha},
        {"beta", c.reward.beta},
        {"thresholds", c.reward.thresholds},
        {"values", c.reward.values},
        {"ref_variable", RefStateName(c.reward.ref_state)}}},
      {"fusion",
       {{"total_executions", c.fusion.total_executions},
        {"rate", c.fusion.rate},
        {"index_mode", ToString(c.fusion.index_mode)}}},
      {"pretrain", {{"n_episodes", c.pretrain_episodes}}},
      {"online",
       {{"n_episodes", c.online.n_episodes},
        {"early_stop", c.online.early_stop},
        {"early_stop_theta", c.online.early_stop_theta},
        {"early_stop_window", c.online.early_stop_window},
        {"forced_theta", c.online.forced_theta
                             ? Json(*c.online.forced_theta)
                             : Json(nullptr)}}},
      {"baseline", {{"n_episodes", c.baseline_episodes}}},
      {"compare", {{"n_episodes", c.compare_episodes}}}};
}

ExperimentConfig ConfigFromJson(const Json& j) {
  ExperimentConfig c;
  JsonObjectReader r(j, "");
  r.Read("schema_version", &c.schema_version);
  if (c.schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version", "unsupported schema version " +
                                            std::to_string(c.schema_version));
  }
  std::string kind = ToString(c.kind);
  r.Read("kind", &kind);
  c.kind = ExperimentKindFromString(kind);
  if (const Json* seeds = r.Child("seeds")) {
    if (!seeds->is_array()) throw ConfigError("seeds", "expected an array");
    c.seeds.clear();
    for (std::size_t i = 0; i < seeds->size(); ++i) {
      if (!(*seeds)[i].is_number_unsigned()) {
        throw ConfigError("seeds[" + std::to_string(i) + "]",
                          "expected a non-negative integer");
      }
      c.seeds.push_back((*seeds)[i].get<std::uint64_t>());
    }
  }
  r.Read("output_dir", &c.output_dir);
  r.Read("checkpoint_every", &c.checkpoint_every);
  r.Read("lifted_model_cache", &c.lifted_model_cache);
  if (const Json* s = r.Child("reactor")) ReadReactor(*s, &c.reactor);
  if (const Json* s = r.Child("grid")) {
    JsonObjectReader g(*s, "grid");
    g.Read("t_f_s", &c.grid.t_f);
    g.Read("n_steps", &c.grid.n_steps);
    g.Read("dt_sub_s", &c.grid.dt_sub);
    g.Finish();
  }
  if (const Json* s = r.Child("noise")) {
    JsonObjectReader n(*s, "noise");
    n.Read("var_v", &c.noise.var_v);
    n.Read("var_w", &c.noise.var_w);
    n.Read("var_m", &c.noise.var_m);
    n.Read("var_n", &c.noise.var_n);
    n.Finish();
  }
  if (const Json* s = r.Child("rto")) ReadRto(*s, &c.rto);
  if (const Json* s = r.Child("kf_ilc")) {
    JsonObjectReader k(*s, "kf_ilc");
    k.Read("p0", &c.kf_ilc.p0);
    k.Read("qp_max_iters", &c.kf_ilc.qp_max_iters);
    k.Read("qp_tolerance", &c.kf_ilc.qp_tolerance);
    k.Read("n_batches", &c.ilc_batches);
    k.Finish();
  }
  if (const Json* s = r.Child("ppo")) PpoHyperparamsFromJson(*s, "ppo", &c.ppo);
  if (const Json* s = r.Child("agent_state")) {
    JsonObjectReader a(*s, "agent_state");
    a.Read("append_last_action", &c.agent_state.append_last_action);
    a.Finish();
  }
  if (const Json* s = r.Child("reward")) {
    JsonObjectReader w(*s, "reward");
    w.Read("alpha", &c.reward.alpha);
    w.Read("beta", &c.reward.beta);
    w.Read("thresholds", &c.reward.thresholds);
    w.Read("values", &c.reward.values);
    std::string ref = RefStateName(c.reward.ref_state);
    w.Read("ref_variable", &ref);
    c.reward.ref_state = RefStateFromName(ref, w.ChildPath("ref_variable"));
    w.Finish();
  }
  if (const Json* s = r.Child("fusion")) {
    JsonObjectReader f(*s, "fusion");
    f.Read("total_executions", &c.fusion.total_executions);
    f.Read("rate", &c.fusion.rate);
    std::string mode = ToString(c.fusion.index_mode);
    f.Read("index_mode", &mode);
    if (mode == "episode") {
      c.fusion.index_mode = FusionIndexMode::kEpisode;
    } else if (mode == "time") {
      c.fusion.index_mode = FusionIndexMode::kTime;
    } else {
      throw ConfigError("fusion.index_mode", "expected \"episode\" or \"time\"");
    }
    f.Finish();
  }
  ReadEpisodes(r.Child("pretrain"), "pretrain", &c.pretrain_episodes);
  if (const Json* s = r.Child("online")) {
    JsonObjectReader o(*s, "online");
    o.Read("n_episodes", &c.online.n_episodes);
    o.Read("early_stop", &c.online.early_stop);
    o.Read("early_stop_theta", &c.online.early_stop_theta);
    o.Read("early_stop_window", &c.online.early_stop_window);
    if (const Json* forced = o.Child("forced_theta")) {
      if (forced->is_null()) {
        c.online.forced_theta.reset();
      } else if (forced->is_number()) {
        c.online.forced_theta = forced->get<double>();
      } else {
        throw ConfigError("online.forced_theta", "expected a number or null");
      }
    }
    o.Finish();
  }
  ReadEpisodes(r.Child("baseline"), "baseline", &c.baseline_episodes);
  ReadEpisodes(r.Child("compare"), "compare", &c.compare_episodes);
  r.Finish();
  c.Validate();
  return c;
}

ExperimentConfig ValidateConfig(const std::string& raw_text) {
  Json j;
  try {
    j = Json::parse(raw_text);
  } catch (const Json::parse_error& e) {
    // Translate the byte offset into a line and column.
    const std::size_t offset = std::min(e.byte, raw_text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < offset; ++i) {
      if (raw_text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("", "JSON parse error at line " + std::to_string(line) +
                              ", column " + std::to_string(column) + ": " +
                              e.what());
  }
  return ConfigFromJson(j);
}

std::string GitBlobSha1(const std::string& content) {
  const std::string blob =
      "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &length, EVP_sha1(),
                 nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0')
        << static_cast<int>(digest[i]);
  }
  return out.str();
}

std::string ConfigSha1(const ExperimentConfig& cfg) {
  return GitBlobSha1(ConfigToJson(cfg).dump(2) + "\n");
}

void WriteLearningCurveCsv(const std::string& path,
                           const std::vector<BatchRecord>& records) {
  std::ofstream out = OpenCsv(path);
  out << "episode,reward,mse,mean_theta\n";
  for (const auto& r : records) {
    out << r.batch << ',' << FormatDouble(r.total_reward) << ','
        << FormatDouble(r.mse) << ',' << FormatDouble(r.mean_theta) << '\n';
  }
  CloseCsv(out, path);
}

RunManifest RunExperimentSeed(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::string& run_dir) {
  cfg.Validate();
  const fs::path dir(run_dir);
  EnsureDir(dir);
  const std::string started = TimestampUtc();
  RunManifest manifest;
  manifest.run_dir = run_dir;
  manifest.seed = seed;
  RunContext ctx{cfg, seed, dir, {}, {}};
  std::exception_ptr failure;
  try {
    const bool need_model = cfg.kind != ExperimentKind::kRto &&
                            cfg.kind != ExperimentKind::kBaseline;
    PrepareNominal(ctx, need_model);
    switch (cfg.kind) {
      case ExperimentKind::kRto:
        break;
      case ExperimentKind::kIlc:
        RunIlc(ctx);
        break;
      case ExperimentKind::kPretrain:
        RunPretrain(ctx, dir);
        break;
      case ExperimentKind::kOnline: {
        PpoAgent agent = RunPretrain(ctx, dir / "pretrain");
        RunOnline(ctx, agent, dir, cfg.online.n_episodes);
        break;
      }
      case ExperimentKind::kBaseline:
        RunBaseline(ctx, dir, cfg.baseline_episodes);
        break;
      case ExperimentKind::kCompare:
        RunCompare(ctx);
        break;
    }
    manifest.status = "ok";
  } catch (const std::exception& e) {
    failure = std::current_exception();
    manifest.status = "failed";
    manifest.error = e.what();
  }
  manifest.summary = ctx.summary;
  manifest.artifacts = ListArtifacts(dir);
  manifest.artifacts.push_back("manifest.json");
  std::sort(manifest.artifacts.begin(), manifest.artifacts.end());
  manifest.artifacts.erase(
      std::unique(manifest.artifacts.begin(), manifest.artifacts.end()),
      manifest.artifacts.end());

  Json j{{"format", "batchloop-run-manifest"},
         {"version", 1},
         {"kind", ToString(cfg.kind)},
         {"seed", seed},
         {"config", ConfigToJson(cfg)},
         {"config_sha1", ConfigSha1(cfg)},
         {"started_utc", started},
         {"finished_utc", TimestampUtc()},
         {"status", manifest.status},
         {"summary", manifest.summary},
         {"artifacts", manifest.artifacts}};
  if (!manifest.error.empty()) j["error"] = manifest.error;
  WriteJsonFile((dir / "manifest.json").string(), j);
  if (failure) std::rethrow_exception(failure);
  return manifest;
}

std::vector<RunManifest> RunExperiment(const ExperimentConfig& cfg) {
  cfg.Validate();
  if (cfg.output_dir.empty()) {
    throw ConfigError("output_dir", "no output directory given");
  }
  std::vector<RunManifest> manifests;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string dir =
        cfg.seeds.size() == 1
            ? cfg.output_dir
            : (fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed)))
                  .string();
    LogInfo("running " + ToString(cfg.kind) + " with seed " +
            std::to_string(seed) + " into " + dir);
    manifests.push_back(RunExperimentSeed(cfg, seed, dir));
  }
  return manifests;
}

}  // namespace batchloop
