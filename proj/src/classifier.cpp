#include "cascade/classifier.hpp"

#include "cascade/errors.hpp"

#include <json.hpp>

#include <cerrno>
#include <cstring>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace cascade {

using nlohmann::json;

std::string encode_request(const ClassifierRequest& request) {
    nlohmann::ordered_json j;
    j["signature"] = request.signature;
    j["source_code"] = request.source_code;
    return j.dump() + "\n";
}

ClassifierResponse decode_response(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw SidecarUnavailable(std::string("classifier sent malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("category") || !j["category"].is_string())
        throw SidecarUnavailable("classifier response lacks a category: " + std::string(line));
    ClassifierResponse r;
    r.category = j["category"].get<std::string>();
    if (auto it = j.find("confidence"); it != j.end() && it->is_number())
        r.confidence = it->get<double>();
    if (auto it = j.find("validated"); it != j.end() && it->is_boolean())
        r.validated = it->get<bool>();
    if (r.confidence < 0.0 || r.confidence > 1.0)
        throw SidecarUnavailable("classifier confidence outside [0,1]");
    return r;
}

StreamClassifier::StreamClassifier(int read_fd, int write_fd, std::chrono::milliseconds timeout)
    : read_fd_(read_fd), write_fd_(write_fd), timeout_(timeout) {}

StreamClassifier::~StreamClassifier() {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

ClassifierResponse StreamClassifier::classify(const ClassifierRequest& request) {
    std::string out = encode_request(request);
    std::size_t sent = 0;
    while (sent < out.size()) {
        ssize_t n = ::send(write_fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == ENOTSOCK) n = ::write(write_fd_, out.data() + sent, out.size() - sent);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw SidecarUnavailable(std::string("classifier write failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }

    auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return decode_response(line);
        }
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw SidecarUnavailable("classifier timed out");
        pollfd pfd{read_fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw SidecarUnavailable(std::string("classifier poll failed: ") + std::strerror(errno));
        }
        if (rc == 0) throw SidecarUnavailable("classifier timed out");
        char chunk[4096];
        ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw SidecarUnavailable("classifier closed the connection");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::unique_ptr<ClassifierBoundary> connect_classifier(const std::string& socket_path) {
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (socket_path.size() >= sizeof addr.sun_path)
        throw SidecarUnavailable(socket_path + ": socket path too long");
    std::memcpy(addr.sun_path, socket_path.c_str(), socket_path.size() + 1);

    int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw SidecarUnavailable(std::string("socket: ") + std::strerror(errno));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        int err = errno;
        ::close(fd);
        throw SidecarUnavailable(socket_path + ": " + std::strerror(err));
    }
    return std::make_unique<StreamClassifier>(fd, fd);
}

} // namespace cascade
