#pragma once

#include "json.hpp"

#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace apcap {

/// Line-delimited JSON log records: {"level", "stage", "msg", ...fields}.
class Logger {
 public:
  enum class Level { Debug, Info, Warn, Error, Off };

  explicit Logger(std::ostream& sink = std::cerr, Level min_level = Level::Info) : sink_(&sink), min_(min_level) {}

  void log(Level level, std::string_view stage, std::string_view msg,
           const nlohmann::ordered_json& fields = nlohmann::ordered_json::object()) {
    if (level < min_) return;
    nlohmann::ordered_json rec;
    rec["level"] = name(level);
    rec["stage"] = stage;
    rec["msg"] = msg;
    for (const auto& [k, v] : fields.items()) rec[k] = v;
    const std::lock_guard lock(mu_);
    *sink_ << rec.dump() << '\n';
  }

  void debug(std::string_view stage, std::string_view msg, const nlohmann::ordered_json& f = nlohmann::ordered_json::object()) {
    log(Level::Debug, stage, msg, f);
  }
  void info(std::string_view stage, std::string_view msg, const nlohmann::ordered_json& f = nlohmann::ordered_json::object()) {
    log(Level::Info, stage, msg, f);
  }
  void warn(std::string_view stage, std::string_view msg, const nlohmann::ordered_json& f = nlohmann::ordered_json::object()) {
    log(Level::Warn, stage, msg, f);
  }
  void error(std::string_view stage, std::string_view msg, const nlohmann::ordered_json& f = nlohmann::ordered_json::object()) {
    log(Level::Error, stage, msg, f);
  }

  static Logger& null() {
    static Logger quiet(std::cerr, Level::Off);
    return quiet;
  }

 private:
  static const char* name(Level l) {
    switch (l) {
      case Level::Debug: return "debug";
      case Level::Info: return "info";
      case Level::Warn: return "warn";
      case Level::Error: return "error";
      case Level::Off: return "off";
    }
    return "?";
  }

  std::ostream* sink_;
  Level min_;
  std::mutex mu_;
};

}  // namespace apcap
