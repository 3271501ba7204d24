#include "icdn/manifest.hpp"

#include "icdn/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

namespace icdn::manifest {

namespace {

class Digest {
public:
    Digest() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
    }
    void update(const char* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("SHA-256 update failed");
    }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw Error("SHA-256 final failed");
        static const char* digits = "0123456789abcdef";
        std::string s;
        for (unsigned int k = 0; k < len; ++k) {
            s.push_back(digits[md[k] >> 4]);
            s.push_back(digits[md[k] & 15]);
        }
        return s;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Digest d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for hashing");
    Digest d;
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        d.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return d.hex();
}

void RunManifest::add_input(const std::string& path) { inputs[path] = sha256_file(path); }
void RunManifest::add_output(const std::string& path) { outputs[path] = sha256_file(path); }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string to_json(const RunManifest& m) {
    nlohmann::json j{{"command", m.command},       {"flags", m.flags},     {"config_path", m.config_path},
                     {"config_hash", m.config_hash}, {"inputs", m.inputs}, {"outputs", m.outputs},
                     {"seed", m.seed},             {"tool_version", m.tool_version},
                     {"started_utc", m.started_utc}, {"finished_utc", m.finished_utc}};
    return j.dump(2);
}

void write_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write manifest '" + path + "'");
    out << to_json(m) << '\n';
}

}  // namespace icdn::manifest
