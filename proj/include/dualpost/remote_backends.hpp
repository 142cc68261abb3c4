#pragma once

// Remote judge and embedding backends speaking a chat-completion-style wire
// protocol. Production parity only: every test path uses the mock judge and
// the local encoders instead.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <condition_variable>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dualpost/encoders.hpp"
#include "dualpost/error.hpp"
#include "dualpost/judge.hpp"

namespace dualpost {

struct RemoteConfig {
    std::string base_url;       // e.g. https://api.example.com
    std::string model;
    std::string key_env = "DUALPOST_JUDGE_KEY";
    int timeout_seconds = 120;
    int max_in_flight = 4;
};

namespace detail {

inline std::string api_key(const std::string& env) {
    const char* key = std::getenv(env.c_str());
    if (key == nullptr || *key == '\0') {
        throw BackendError("environment variable " + env + " is not set");
    }
    return key;
}

// Bounds the number of concurrent remote calls.
class InFlightGate {
public:
    explicit InFlightGate(int cap) : cap_(cap) {}

    struct Slot {
        InFlightGate& gate;
        ~Slot() {
            std::lock_guard lock(gate.mu_);
            --gate.active_;
            gate.cv_.notify_one();
        }
    };

    Slot acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return active_ < cap_; });
        ++active_;
        return Slot{*this};
    }

private:
    int cap_;
    int active_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

inline std::unique_ptr<httplib::Client> make_client(const RemoteConfig& cfg) {
    auto client = std::make_unique<httplib::Client>(cfg.base_url);
    client->set_connection_timeout(std::chrono::seconds(cfg.timeout_seconds));
    client->set_read_timeout(std::chrono::seconds(cfg.timeout_seconds));
    client->set_bearer_token_auth(api_key(cfg.key_env));
    return client;
}

}  // namespace detail

class RemoteJudgeBackend final : public JudgeBackend {
public:
    explicit RemoteJudgeBackend(RemoteConfig cfg)
        : cfg_(std::move(cfg)), gate_(cfg_.max_in_flight) {}

    std::string complete(const JudgeRequest& req, const std::string& prompt) override {
        const auto slot = gate_.acquire();
        json content = json::array();
        content.push_back({{"type", "text"}, {"text", prompt}});
        for (const std::string& ref : req.frame_refs) {
            content.push_back({{"type", "image_url"}, {"image_url", {{"url", ref}}}});
        }
        json body = {
            {"model", cfg_.model},
            {"messages", json::array({{{"role", "user"}, {"content", content}}})},
        };
        auto client = detail::make_client(cfg_);
        const auto res = client->Post("/v1/chat/completions", body.dump(),
                                      "application/json");
        if (!res) throw BackendError("judge transport failure: " + to_string(res.error()));
        if (res->status != 200) {
            throw BackendError("judge endpoint returned HTTP " +
                               std::to_string(res->status));
        }
        try {
            return json::parse(res->body)
                .at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("malformed chat-completion response: ") +
                               e.what());
        }
    }

private:
    RemoteConfig cfg_;
    detail::InFlightGate gate_;
};

class RemoteTextEncoder final : public TextEncoder {
public:
    RemoteTextEncoder(RemoteConfig cfg, int dim) : cfg_(std::move(cfg)), dim_(dim) {}

    std::vector<double> embed_text(const std::string& text) const override {
        if (text.empty()) throw InvalidArgument("embed_text: empty input");
        json body = {{"model", cfg_.model}, {"input", text}};
        auto client = detail::make_client(cfg_);
        const auto res = client->Post("/v1/embeddings", body.dump(), "application/json");
        if (!res || res->status != 200) {
            throw BackendError("embedding endpoint failure");
        }
        try {
            const auto v = json::parse(res->body)
                               .at("data").at(0).at("embedding")
                               .get<std::vector<double>>();
            if (static_cast<int>(v.size()) != dim_) {
                throw BackendError("embedding dimension mismatch");
            }
            return v;
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("malformed embedding response: ") + e.what());
        }
    }

    int dim() const override { return dim_; }

private:
    RemoteConfig cfg_;
    int dim_;
};

class RemoteImageEncoder final : public ImageEncoder {
public:
    RemoteImageEncoder(RemoteConfig cfg, int dim) : cfg_(std::move(cfg)), dim_(dim) {}

    std::vector<double> embed_image(const std::string& ref) const override {
        if (ref.empty()) throw InvalidArgument("embed_image: empty input");
        json body = {{"model", cfg_.model}, {"input", ref}, {"modality", "image"}};
        auto client = detail::make_client(cfg_);
        const auto res = client->Post("/v1/embeddings", body.dump(), "application/json");
        if (!res || res->status != 200) {
            throw BackendError("embedding endpoint failure");
        }
        try {
            const auto v = json::parse(res->body)
                               .at("data").at(0).at("embedding")
                               .get<std::vector<double>>();
            if (static_cast<int>(v.size()) != dim_) {
                throw BackendError("embedding dimension mismatch");
            }
            return v;
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("malformed embedding response: ") + e.what());
        }
    }

    int dim() const override { return dim_; }

private:
    RemoteConfig cfg_;
    int dim_;
};

}  // namespace dualpost
