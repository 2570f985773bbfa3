#pragma once

// Command-line front end: init-weights, convert, bench, verify.
// Exit codes: 0 success, 1 validation or usage error, 2 I/O or format error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "chunkvc/pipeline.hpp"
#include "chunkvc/probes.hpp"

namespace chunkvc {

namespace detail {

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError(ModelFormatCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ModelFormatError(ModelFormatCode::Io, "cannot open " + path + " for writing");
  f << text;
  if (!f) throw ModelFormatError(ModelFormatCode::Io, "write failed for " + path);
}

inline SessionConfig session_for(const ModelConfig& cfg, const std::string& setting, std::optional<int> chunk_ms) {
  SessionConfig s = setting.empty() ? cfg.session : SessionConfig::for_setting(parse_setting(setting));
  if (chunk_ms) s.chunk_ms = *chunk_ms;
  const auto v = validate_session(s);
  if (!v.empty()) throw ConfigError(v.front());
  return s;
}

}  // namespace detail

inline int cmd_init_weights(const std::string& config_path, std::uint64_t seed, const std::string& out) {
  const ModelConfig cfg =
      config_path.empty() ? ModelConfig::full() : config_from_text(detail::read_text_file(config_path));
  const auto violations = validate_config(cfg);
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << "invalid config: " << v << '\n';
    return 1;
  }
  save_model(cfg, init_weights(cfg, seed), out);
  std::cout << "wrote " << out << '\n';
  return 0;
}

inline int cmd_convert(const std::string& model_path, const std::string& source_path,
                       const std::string& reference_path, const std::string& out_path, const std::string& setting,
                       std::optional<int> chunk_ms, const std::string& report_path, bool threaded) {
  const auto [cfg, weights] = load_model(model_path);
  const SessionConfig session = detail::session_for(cfg, setting, chunk_ms);
  const Model model = Model::build(cfg, weights);
  const PcmAudio source = load_wav(source_path);
  const PcmAudio reference = load_wav(reference_path);

  StreamSession s(model, session);
  s.prepare_reference(reference);
  const PcmAudio out = run_stream(s, source, std::size_t(session.chunk_samples()), threaded);
  write_wav(out, out_path);
  if (!report_path.empty()) detail::write_text_file(report_path, s.latency_report().to_text());
  std::cout << "converted " << source.samples.size() << " samples to " << out_path << '\n';
  return 0;
}

inline int cmd_bench(const std::string& model_path, int seconds, const std::string& setting,
                     const std::string& report_path, bool threaded, std::uint64_t seed) {
  if (seconds < 1) {
    std::cerr << "bench: --seconds must be >= 1\n";
    return 1;
  }
  const auto [cfg, weights] = load_model(model_path);
  const SessionConfig session = detail::session_for(cfg, setting, std::nullopt);
  const Model model = Model::build(cfg, weights);
  const PcmAudio reference = noise_audio(std::size_t(cfg.mel.sample_rate), seed);
  const PcmAudio source = noise_audio(std::size_t(seconds) * std::size_t(cfg.mel.sample_rate), seed + 1);

  StreamSession s(model, session);
  s.prepare_reference(reference);
  run_stream(s, source, std::size_t(session.chunk_samples()), threaded);
  const std::string report = s.latency_report().to_text();
  std::cout << report;
  if (!report_path.empty()) detail::write_text_file(report_path, report);
  return 0;
}

inline int cmd_verify(const std::string& model_path) {
  const auto [cfg, weights] = load_model(model_path);
  const Model model = Model::build(cfg, weights);
  bool all = true;
  for (const ProbeResult& p : run_probes(model)) {
    std::cout << (p.pass ? "PASS " : "FAIL ") << p.name << ": " << p.detail << '\n';
    all = all && p.pass;
  }
  return all ? 0 : 1;
}

inline int run_cli(int argc, char** argv) {
  CLI::App app{"Chunk-streaming voice conversion engine"};
  app.require_subcommand(1);

  std::string config_path, out, model_path, source, reference, setting, report;
  std::optional<int> chunk_ms;
  std::uint64_t seed = 0;
  int seconds = 10;
  bool threaded = false;

  auto* init = app.add_subcommand("init-weights", "Write a seeded random model container");
  init->add_option("--config", config_path, "Config text file (default: full setting)")->check(CLI::ExistingFile);
  init->add_option("--seed", seed, "Initialization seed")->default_val(0);
  init->add_option("--out", out, "Output .cnvc path")->required();

  auto* convert = app.add_subcommand("convert", "Convert a source WAV to the reference voice");
  convert->add_option("--model", model_path)->required();
  convert->add_option("--source", source)->required();
  convert->add_option("--reference", reference)->required();
  convert->add_option("--out", out)->required();
  convert->add_option("--setting", setting)->check(CLI::IsMember({"full", "fast"}));
  convert->add_option("--chunk-ms", chunk_ms);
  convert->add_option("--report", report, "Write the latency report here");
  convert->add_flag("--threaded", threaded, "Run the three stages as a pipeline");

  auto* bench = app.add_subcommand("bench", "Stream seeded noise and report latency");
  bench->add_option("--model", model_path)->required();
  bench->add_option("--seconds", seconds)->default_val(10);
  bench->add_option("--setting", setting)->check(CLI::IsMember({"full", "fast"}));
  bench->add_option("--report", report);
  bench->add_option("--seed", seed)->default_val(1);
  bench->add_flag("--threaded", threaded);

  auto* verify = app.add_subcommand("verify", "Run the built-in property probes");
  verify->add_option("--model", model_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*init) return cmd_init_weights(config_path, seed, out);
    if (*convert) return cmd_convert(model_path, source, reference, out, setting, chunk_ms, report, threaded);
    if (*bench) return cmd_bench(model_path, seconds, setting, report, threaded, seed);
    if (*verify) return cmd_verify(model_path);
  } catch (const ModelFormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const WavError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace chunkvc
