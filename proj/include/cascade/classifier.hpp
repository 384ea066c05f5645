#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

namespace cascade {

struct ClassifierRequest {
    std::string signature;
    std::string source_code;
};

struct ClassifierResponse {
    std::string category;
    double confidence = 0.0;
    bool validated = false;
};

/// Out-of-process semantic classifier for signatures the cheatsheet does not know.
class ClassifierBoundary {
public:
    virtual ~ClassifierBoundary() = default;
    /// Throws SidecarUnavailable on transport or protocol failure.
    virtual ClassifierResponse classify(const ClassifierRequest& request) = 0;
};

std::string encode_request(const ClassifierRequest& request);
/// Throws SidecarUnavailable on a malformed response line.
ClassifierResponse decode_response(std::string_view line);

/// Newline-delimited JSON over a pair of file descriptors (a socket or pipes).
/// The descriptors are owned and closed on destruction.
class StreamClassifier : public ClassifierBoundary {
public:
    StreamClassifier(int read_fd, int write_fd,
                     std::chrono::milliseconds timeout = std::chrono::seconds(30));
    ~StreamClassifier() override;
    StreamClassifier(const StreamClassifier&) = delete;
    StreamClassifier& operator=(const StreamClassifier&) = delete;

    ClassifierResponse classify(const ClassifierRequest& request) override;

private:
    int read_fd_;
    int write_fd_;
    std::chrono::milliseconds timeout_;
    std::string buffer_;
};

/// Connects to a sidecar listening on a local (unix-domain) socket path.
/// Throws SidecarUnavailable when nothing is listening.
std::unique_ptr<ClassifierBoundary> connect_classifier(const std::string& socket_path);

} // namespace cascade
