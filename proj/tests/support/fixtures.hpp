#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>

#include "sysrev/pipeline.hpp"

namespace sysrev::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(SYSREV_FIXTURE_DIR) / name;
}

inline const char* const kGoldenQuestion = "What are the causes of Hepatitis A?";
inline const char* const kGoldenQuery = "What are the causes of Hepatitis A and how is it diagnosed?";

/// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("sysrev-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline pipeline::EnvLookup empty_env() {
  return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

/// The shipped offline configuration with sessions under `session_dir`.
inline pipeline::PipelineConfig golden_config(const std::filesystem::path& session_dir) {
  auto config = pipeline::load_config(fixture("golden.conf").string(), empty_env());
  config.session_dir = session_dir.string();
  return config;
}

inline std::unique_ptr<pipeline::Pipeline> golden_pipeline(const std::filesystem::path& session_dir) {
  auto config = golden_config(session_dir);
  auto components = pipeline::build_components(config);
  return std::make_unique<pipeline::Pipeline>(std::move(config), std::move(components));
}

/// httplib server on 127.0.0.1 with a free port, serving on its own thread.
class LoopbackServer {
 public:
  LoopbackServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw std::runtime_error("cannot bind loopback server");
  }
  ~LoopbackServer() { stop(); }

  httplib::Server& server() noexcept { return server_; }

  void start() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

inline double seconds_between(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

}  // namespace sysrev::testing
