#pragma once

// Test fixtures shared by the integration and acceptance suites.

#include <httplib.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "vidret/demo.hpp"
#include "vidret/engine.hpp"
#include "vidret/ingest.hpp"
#include "vidret/service.hpp"

namespace support {

namespace fs = std::filesystem;

inline fs::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto p = fs::temp_directory_path() /
             ("vidret_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

/// Demo corpus generated once per process (seed 7, 20 x 30).
struct DemoCorpus {
    fs::path dir;
    vidret::demo::DemoTruth truth;
    std::shared_ptr<const vidret::Corpus> corpus;
};

inline const DemoCorpus& demo_corpus() {
    static const DemoCorpus dc = [] {
        DemoCorpus d;
        d.dir = temp_dir("demo");
        vidret::demo::DemoOptions opt;
        opt.out = d.dir;
        opt.seed = 7;
        d.truth = vidret::demo::write_demo_corpus(opt);
        d.corpus = std::make_shared<const vidret::Corpus>(vidret::load_corpus((d.dir / "manifest.json").string()));
        return d;
    }();
    return dc;
}

struct CommandResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// Runs a shell command, capturing stdout and stderr separately.
inline CommandResult run(const std::string& cmd) {
    const auto err_file = temp_dir("stderr") / "err.txt";
    CommandResult r;
    FILE* pipe = ::popen((cmd + " 2>" + err_file.string()).c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_file);
    fs::remove_all(err_file.parent_path());
    return r;
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

/// An httplib server on a free local port running in a background thread.
class BackgroundServer {
public:
    explicit BackgroundServer(std::function<void(httplib::Server&)> setup) {
        setup(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~BackgroundServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }
    int port() const { return port_; }
    std::string url(const std::string& path = "") const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

/// vidret::service::Service on a free port in a background thread.
class ServiceRunner {
public:
    explicit ServiceRunner(std::shared_ptr<const vidret::engine::Engine> engine,
                           vidret::service::ServiceOptions opts = {})
        : service_(std::move(engine), std::move(opts)) {
        port_ = service_.bind(0);
        thread_ = std::thread([this] { service_.run(); });
        service_.wait_until_ready();
    }
    ~ServiceRunner() {
        service_.stop();
        if (thread_.joinable()) thread_.join();
    }
    int port() const { return port_; }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(std::chrono::seconds(60));
        return c;
    }

private:
    vidret::service::Service service_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace support
