// apcap: command-line front end.
//
//   apcap [--config FILE] [--set key=value]... <command> [options]
//
// Commands: schema, perturb, render, synthesize, screen, assemble, split,
// eval, viz. Exit status 0 on success, 1 on a failed stage, 2 on bad usage.

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <regex>
#include <sstream>

#include "apcap/apcap.hpp"

namespace {

using namespace apcap;

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string log_level = "info";
};

Logger::Level parse_level(const std::string& s) {
  if (s == "debug") return Logger::Level::Debug;
  if (s == "warn") return Logger::Level::Warn;
  if (s == "error") return Logger::Level::Error;
  if (s == "off") return Logger::Level::Off;
  return Logger::Level::Info;
}

/// Config file + --set overrides + per-command flag overrides, in that order.
PipelineConfig config_with(const Globals& g, std::vector<std::string> flag_overrides) {
  std::vector<std::string> all = g.overrides;
  all.insert(all.end(), flag_overrides.begin(), flag_overrides.end());
  return load_config(g.config_path, all);
}

/// "key=value" for every flag the user actually passed.
struct Overrides {
  std::vector<std::string> items;
  template <typename T>
  void add(const CLI::Option* opt, const std::string& key, const T& value) {
    if (opt->count() == 0) return;
    std::ostringstream ss;
    ss << value;
    items.push_back(key + "=" + ss.str());
  }
};

ImageSize parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidArgument, "size must look like 256x256, got '" + text + "'");
  }
}

std::string yaml_quote(const std::string& s) { return "'" + std::regex_replace(s, std::regex("'"), "''") + "'"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-annotated animal dataset synthesis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config file (default: $APCAP_CONFIG)");
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");
  app.add_option("--log-level", g.log_level, "debug|info|warn|error|off")->capture_default_str();

  // schema
  auto* schema_cmd = app.add_subcommand("schema", "Show, list or validate keypoint schemas");
  std::string schema_action, schema_arg;
  schema_cmd->add_option("action", schema_action, "show|list|validate")->required()->check(CLI::IsMember({"show", "list", "validate"}));
  schema_cmd->add_option("selector", schema_arg, "Family id or schema file");

  // perturb
  auto* perturb_cmd = app.add_subcommand("perturb", "Apply pose-adjustment perturbations to COCO poses");
  std::string p_schema, p_in, p_out, p_audit, p_ops;
  std::uint64_t p_seed = 0;
  auto* p_schema_opt = perturb_cmd->add_option("--schema", p_schema, "Schema id or file");
  perturb_cmd->add_option("--in", p_in, "Input COCO file")->required();
  perturb_cmd->add_option("--out", p_out, "Output COCO file")->required();
  perturb_cmd->add_option("--audit", p_audit, "Audit log (JSON lines); default <out>.audit.jsonl");
  auto* p_ops_opt = perturb_cmd->add_option("--ops", p_ops, "Comma-separated ops: F_m,L_s,J_f,B_r");
  auto* p_seed_opt = perturb_cmd->add_option("--seed", p_seed, "Global seed");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render pose maps for every annotation of a COCO file");
  std::string r_schema, r_in, r_out, r_style, r_size = "256x256";
  auto* r_schema_opt = render_cmd->add_option("--schema", r_schema, "Schema id or file");
  render_cmd->add_option("--in", r_in, "Input COCO file")->required();
  render_cmd->add_option("--out-dir", r_out, "Directory for PNG maps")->required();
  auto* r_style_opt = render_cmd->add_option("--style", r_style, "skeleton|heatmap");
  auto* r_size_opt = render_cmd->add_option("--size", r_size, "WxH")->capture_default_str();

  // synthesize
  auto* synth_cmd = app.add_subcommand("synthesize", "Run the full generation pipeline");
  std::string s_schema, s_input, s_output, s_backend, s_endpoint, s_ratio, s_image_root;
  std::uint64_t s_seed = 0;
  int s_cap = 0;
  auto* s_schema_opt = synth_cmd->add_option("--schema", s_schema, "Schema id or file");
  auto* s_input_opt = synth_cmd->add_option("--input", s_input, "COCO file of real samples");
  auto* s_output_opt = synth_cmd->add_option("--output-dir", s_output, "Output directory");
  auto* s_image_root_opt = synth_cmd->add_option("--image-root", s_image_root, "Directory of real images");
  auto* s_seed_opt = synth_cmd->add_option("--seed", s_seed, "Global seed");
  auto* s_backend_opt = synth_cmd->add_option("--backend", s_backend, "mock|remote")->check(CLI::IsMember({"mock", "remote"}));
  auto* s_endpoint_opt = synth_cmd->add_option("--endpoint", s_endpoint, "Remote backend URL");
  auto* s_cap_opt = synth_cmd->add_option("--max-in-flight", s_cap, "Concurrent requests");
  auto* s_ratio_opt = synth_cmd->add_option("--ratio", s_ratio, "real:synthetic, e.g. 1:6");

  // screen
  auto* screen_cmd = app.add_subcommand("screen", "Screen generated samples against re-detected poses");
  std::string sc_schema, sc_generated, sc_redetected, sc_accepted, sc_rejected;
  double sc_oks = 0.0;
  auto* sc_schema_opt = screen_cmd->add_option("--schema", sc_schema, "Schema id or file");
  screen_cmd->add_option("--generated", sc_generated, "COCO manifest of generated samples")->required();
  screen_cmd->add_option("--redetected", sc_redetected, "COCO file of re-detected poses")->required();
  screen_cmd->add_option("--accepted", sc_accepted, "Output COCO for accepted samples")->required();
  screen_cmd->add_option("--rejected", sc_rejected, "Output COCO for rejected samples")->required();
  auto* sc_oks_opt = screen_cmd->add_option("--oks-accept", sc_oks, "OKS acceptance threshold");

  // assemble
  auto* assemble_cmd = app.add_subcommand("assemble", "Mix real and synthetic samples at a fixed ratio");
  std::string a_schema, a_real, a_synth, a_out, a_ratio;
  std::uint64_t a_seed = 0;
  auto* a_schema_opt = assemble_cmd->add_option("--schema", a_schema, "Schema id or file");
  assemble_cmd->add_option("--real", a_real, "COCO file of real samples")->required();
  assemble_cmd->add_option("--synth", a_synth, "COCO file of synthetic samples (provenance + group tagged)")->required();
  assemble_cmd->add_option("--out", a_out, "Output manifest")->required();
  auto* a_ratio_opt = assemble_cmd->add_option("--ratio", a_ratio, "real:synthetic, e.g. 1:6");
  auto* a_seed_opt = assemble_cmd->add_option("--seed", a_seed, "Seed recorded in the manifest");

  // split
  auto* split_cmd = app.add_subcommand("split", "Cross-domain train/test split and balanced batches");
  std::string sp_schema, sp_in, sp_spec, sp_train, sp_test;
  std::uint64_t sp_seed = 0;
  std::size_t sp_preview = 0;
  auto* sp_schema_opt = split_cmd->add_option("--schema", sp_schema, "Schema id or file");
  split_cmd->add_option("--in", sp_in, "COCO manifest to split")->required();
  auto* sp_spec_opt = split_cmd->add_option("--spec", sp_spec, "Cross-domain spec (YAML: source, target, source_ratio, batch_size)");
  split_cmd->add_option("--train", sp_train, "Output train manifest")->required();
  split_cmd->add_option("--test", sp_test, "Output test manifest")->required();
  auto* sp_seed_opt = split_cmd->add_option("--seed", sp_seed, "Batch sampler seed");
  split_cmd->add_option("--preview-batches", sp_preview, "Print the first N training batches as JSON lines");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate predictions with OKS mAP or PCK@0.05");
  std::string e_schema, e_metric = "map", e_preds, e_gts, e_out, e_norm = "bbox_max";
  auto* e_schema_opt = eval_cmd->add_option("--schema", e_schema, "Schema id or file");
  eval_cmd->add_option("--metric", e_metric, "map|pck05")->check(CLI::IsMember({"map", "pck05"}))->capture_default_str();
  eval_cmd->add_option("--preds", e_preds, "COCO results file")->required();
  eval_cmd->add_option("--gts", e_gts, "COCO ground-truth file")->required();
  eval_cmd->add_option("--out", e_out, "Report JSON (default: stdout)");
  eval_cmd->add_option("--pck-normalizer", e_norm, "bbox_max|bbox_diagonal")->capture_default_str();

  // viz
  auto* viz_cmd = app.add_subcommand("viz", "Draw skeleton overlays for a manifest");
  std::string v_schema, v_manifest, v_out, v_root;
  auto* v_schema_opt = viz_cmd->add_option("--schema", v_schema, "Schema id or file");
  viz_cmd->add_option("--manifest", v_manifest, "COCO manifest")->required();
  viz_cmd->add_option("--out-dir", v_out, "Directory for overlays")->required();
  viz_cmd->add_option("--image-root", v_root, "Directory image_refs resolve against (default: manifest directory)");

  CLI11_PARSE(app, argc, argv);
  Logger log(std::cerr, parse_level(g.log_level));

  const char* stage = "config";
  try {
    if (schema_cmd->parsed()) {
      stage = "schema";
      if (schema_action == "list") {
        for (const char* id : {"AP10K17", "AnimalPose17", "Birds23"}) std::cout << id << "\n";
        return 0;
      }
      if (schema_arg.empty()) throw Error(ErrorKind::InvalidArgument, "schema " + schema_action + " needs a selector");
      const auto schema = schema_action == "validate" ? load_schema_file(schema_arg) : resolve_schema(schema_arg);
      if (schema_action == "validate") {
        std::cout << schema->family_id() << ": ok (" << schema->size() << " keypoints)\n";
      } else {
        std::cout << schema_to_yaml(*schema);
      }
      return 0;
    }

    if (perturb_cmd->parsed()) {
      Overrides o;
      o.add(p_schema_opt, "schema", yaml_quote(p_schema));
      o.add(p_seed_opt, "seed", p_seed);
      if (p_ops_opt->count()) o.items.push_back("perturb.ops=[" + p_ops + "]");
      const auto cfg = config_with(g, o.items);
      stage = "perturb";
      const auto schema = resolve_schema(cfg.schema);
      auto result = perturb_samples(read_coco(p_in, schema), cfg.perturb, cfg.perturb_ops, cfg.seed);
      write_coco(result.samples, schema, p_out);
      write_text_file(p_audit.empty() ? p_out + ".audit.jsonl" : p_audit, result.audit_jsonl);
      log.info(stage, "perturbed", {{"samples", result.samples.size()}, {"out", p_out}});
      return 0;
    }

    if (render_cmd->parsed()) {
      Overrides o;
      o.add(r_schema_opt, "schema", yaml_quote(r_schema));
      o.add(r_style_opt, "pose_map.style", r_style);
      const auto cfg = config_with(g, o.items);
      stage = "render";
      const auto schema = resolve_schema(cfg.schema);
      const ImageSize size = r_size_opt->count() ? parse_size(r_size) : cfg.resolution;
      const auto written = render_samples(read_coco(r_in, schema), size, cfg.pose_map_style, cfg.pose_map, r_out, log);
      log.info(stage, "rendered", {{"maps", written.size()}, {"out_dir", r_out}});
      return 0;
    }

    if (synth_cmd->parsed()) {
      Overrides o;
      o.add(s_schema_opt, "schema", yaml_quote(s_schema));
      o.add(s_input_opt, "input", yaml_quote(s_input));
      o.add(s_output_opt, "output_dir", yaml_quote(s_output));
      o.add(s_image_root_opt, "image_root", yaml_quote(s_image_root));
      o.add(s_seed_opt, "seed", s_seed);
      o.add(s_backend_opt, "backend.kind", s_backend);
      o.add(s_endpoint_opt, "backend.endpoint", yaml_quote(s_endpoint));
      o.add(s_cap_opt, "backend.max_in_flight", s_cap);
      o.add(s_ratio_opt, "ratio", yaml_quote(s_ratio));
      const auto cfg = config_with(g, o.items);
      const auto outcome = synthesize(cfg, log);
      if (outcome.exit_code) {
        std::cerr << "apcap: " << outcome.message << "\n";
        return outcome.exit_code;
      }
      std::cout << pipeline_detail::summary_json(outcome).dump() << "\n";
      return 0;
    }

    if (screen_cmd->parsed()) {
      Overrides o;
      o.add(sc_schema_opt, "schema", yaml_quote(sc_schema));
      o.add(sc_oks_opt, "filter.oks_accept", sc_oks);
      const auto cfg = config_with(g, o.items);
      stage = "screen";
      const auto schema = resolve_schema(cfg.schema);
      const auto r = screen_samples(read_coco(sc_generated, schema), read_coco(sc_redetected, schema), cfg.filter);
      write_coco(r.accepted, schema, sc_accepted);
      write_coco(r.rejected, schema, sc_rejected);
      std::cout << Json{{"accepted", r.accepted.size()}, {"rejected", r.rejected.size()}, {"mean_oks", r.mean_oks}}.dump() << "\n";
      return 0;
    }

    if (assemble_cmd->parsed()) {
      Overrides o;
      o.add(a_schema_opt, "schema", yaml_quote(a_schema));
      o.add(a_ratio_opt, "ratio", yaml_quote(a_ratio));
      o.add(a_seed_opt, "seed", a_seed);
      const auto cfg = config_with(g, o.items);
      stage = "assemble";
      const auto schema = resolve_schema(cfg.schema);
      const auto groups = static_cast<std::size_t>(cfg.ratio.groups_per_strategy());
      SynthGroups synth;
      for (const auto& s : read_coco(a_synth, schema)) {
        if (s.provenance == Provenance::Real) throw Error(ErrorKind::InvalidArgument, "'" + s.image_ref + "' in --synth is tagged real");
        if (!s.group || *s.group < 0 || static_cast<std::size_t>(*s.group) >= groups) {
          throw Error(ErrorKind::RatioViolation, "'" + s.image_ref + "' has no group index below " + std::to_string(groups));
        }
        auto& list = synth[s.provenance];
        list.resize(groups);
        list[static_cast<std::size_t>(*s.group)].push_back(s);
      }
      const auto manifest = assemble_in_domain(read_coco(a_real, schema), synth, cfg.ratio, "in_domain", cfg.seed);
      write_coco(manifest, schema, a_out);
      log.info(stage, "assembled", {{"samples", manifest.size()}, {"synthetic", manifest.synthetic_count()}});
      return 0;
    }

    if (split_cmd->parsed()) {
      Overrides o;
      o.add(sp_schema_opt, "schema", yaml_quote(sp_schema));
      o.add(sp_seed_opt, "seed", sp_seed);
      const auto cfg = config_with(g, o.items);
      stage = "split";
      const auto schema = resolve_schema(cfg.schema);
      auto spec = cfg.cross_domain;
      std::size_t batch_size = cfg.batch_size;
      if (sp_spec_opt->count()) std::tie(spec, batch_size) = load_cross_domain_spec(sp_spec);
      const auto split = split_cross_domain(read_coco(sp_in, schema), spec, cfg.seed);
      write_coco(split.train, schema, sp_train);
      write_coco(split.test, schema, sp_test);
      log.info(stage, "split", {{"train", split.train.size()}, {"test", split.test.size()}});
      if (sp_preview) {
        BalancedBatchSampler sampler(split.train, spec, batch_size, cfg.seed);
        for (std::size_t b = 0; b < sp_preview; ++b) {
          const auto batch = sampler.next();
          if (!batch) break;
          Json refs = Json::array();
          for (const auto i : *batch) refs.push_back(split.train.samples()[i].image_ref);
          std::cout << Json{{"epoch", sampler.current_epoch()}, {"samples", refs}}.dump() << "\n";
        }
      }
      return 0;
    }

    if (eval_cmd->parsed()) {
      Overrides o;
      o.add(e_schema_opt, "schema", yaml_quote(e_schema));
      const auto cfg = config_with(g, o.items);
      stage = "eval";
      const auto schema = resolve_schema(cfg.schema);
      const auto gt = read_coco_document(e_gts, schema);
      const auto dets = read_coco_results(e_preds, schema, gt);
      EvalReport report;
      if (parse_metric(e_metric) == Metric::MAP) {
        report = map_oks(dets, gt.samples);
      } else {
        std::vector<Pose> preds;
        preds.reserve(dets.size());
        for (const auto& d : dets) preds.push_back(d.pose);
        report = pck(preds, gt.samples, {0.05, parse_pck_normalizer(e_norm)});
      }
      const auto text = report_json(report).dump(1) + "\n";
      if (e_out.empty()) {
        std::cout << text;
      } else {
        write_text_file(e_out, text);
      }
      return 0;
    }

    if (viz_cmd->parsed()) {
      Overrides o;
      o.add(v_schema_opt, "schema", yaml_quote(v_schema));
      const auto cfg = config_with(g, o.items);
      stage = "viz";
      const auto schema = resolve_schema(cfg.schema);
      const fs::path root = v_root.empty() ? fs::path(v_manifest).parent_path() : fs::path(v_root);
      const auto written = viz_samples(read_coco(v_manifest, schema), root, v_out);
      log.info(stage, "overlays written", {{"files", written.size()}, {"out_dir", v_out}});
      return 0;
    }
  } catch (const Error& e) {
    log.error(stage, e.what(), {{"kind", std::string(to_string(e.kind()))}});
    std::cerr << "apcap: " << stage << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log.error(stage, e.what());
    std::cerr << "apcap: " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 2;
}
