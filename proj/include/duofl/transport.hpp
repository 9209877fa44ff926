#pragma once

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duofl/encoding.hpp"

namespace duofl::transport {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MessageType : std::uint8_t {
  INIT_MODEL = 1,
  INIT_PROJ_SEED = 2,
  INIT_PK = 3,
  SEED_REG = 4,
  ENC_MASK_PACK = 5,
  MASKED_UPDATE = 6,
  STD_GRAD = 7,
  NORM_PAIR = 8,
  COS_P0 = 9,
  WEIGHTS_AND_MASKSUM = 10,
  GLOBAL_GRAD = 11,
};

inline bool known_message_type(std::uint8_t t) {
  return t >= 1 && t <= 11;
}

inline const char* message_type_name(MessageType t) {
  switch (t) {
    case MessageType::INIT_MODEL: return "INIT_MODEL";
    case MessageType::INIT_PROJ_SEED: return "INIT_PROJ_SEED";
    case MessageType::INIT_PK: return "INIT_PK";
    case MessageType::SEED_REG: return "SEED_REG";
    case MessageType::ENC_MASK_PACK: return "ENC_MASK_PACK";
    case MessageType::MASKED_UPDATE: return "MASKED_UPDATE";
    case MessageType::STD_GRAD: return "STD_GRAD";
    case MessageType::NORM_PAIR: return "NORM_PAIR";
    case MessageType::COS_P0: return "COS_P0";
    case MessageType::WEIGHTS_AND_MASKSUM: return "WEIGHTS_AND_MASKSUM";
    case MessageType::GLOBAL_GRAD: return "GLOBAL_GRAD";
  }
  return "UNKNOWN";
}

// Entity ids on the wire: clients use their 0-based index, servers the two
// reserved values below.
inline constexpr std::uint32_t kServerS0Id = 0xFFFFFFF0u;
inline constexpr std::uint32_t kServerS1Id = 0xFFFFFFF1u;

inline constexpr std::size_t kFrameHeaderBytes = 9;  // type + round + sender
inline constexpr std::size_t kDefaultMaxFrameBytes = 256ull * 1024 * 1024;

struct Frame {
  MessageType msg_type = MessageType::INIT_MODEL;
  std::uint32_t round = 0;
  std::uint32_t sender_id = 0;
  std::vector<std::uint8_t> payload;

  // Value of the length field: header fields plus payload, excluding the
  // 4-byte length prefix itself. Byte accounting sums this.
  std::uint32_t length() const {
    return static_cast<std::uint32_t>(kFrameHeaderBytes + payload.size());
  }

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.msg_type == b.msg_type && a.round == b.round &&
           a.sender_id == b.sender_id && a.payload == b.payload;
  }
};

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + f.length());
  append_u32_be(out, f.length());
  out.push_back(static_cast<std::uint8_t>(f.msg_type));
  append_u32_be(out, f.round);
  append_u32_be(out, f.sender_id);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

// Non-throwing: malformed input yields nullopt and an error description.
inline std::optional<Frame> decode_frame(std::span<const std::uint8_t> bytes,
                                         std::string* error = nullptr,
                                         std::size_t max_frame = kDefaultMaxFrameBytes) {
  auto fail = [&](const char* why) -> std::optional<Frame> {
    if (error) *error = why;
    return std::nullopt;
  };
  if (bytes.size() < 4) return fail("truncated length field");
  std::size_t offset = 0;
  std::uint32_t length = read_u32_be(bytes, offset);
  if (length < kFrameHeaderBytes) return fail("length below header size");
  if (length > max_frame) return fail("frame exceeds maximum size");
  if (bytes.size() - 4 < length) return fail("truncated frame body");
  Frame f;
  std::uint8_t type = bytes[offset++];
  if (!known_message_type(type)) return fail("unknown message type");
  f.msg_type = static_cast<MessageType>(type);
  f.round = read_u32_be(bytes, offset);
  f.sender_id = read_u32_be(bytes, offset);
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                   bytes.begin() + static_cast<std::ptrdiff_t>(4 + length));
  return f;
}

// One direction of one entity pair: FIFO, reliable, counted.
class Channel {
 public:
  virtual ~Channel() = default;

  void send(const Frame& f) {
    bytes_sent_ += f.length();
    ++frames_sent_;
    send_bytes(encode_frame(f));
  }

  Frame recv() {
    std::uint8_t len_buf[4];
    recv_exact(len_buf, 4);
    std::size_t off = 0;
    std::uint32_t length = read_u32_be(std::span<const std::uint8_t>(len_buf, 4), off);
    if (length < kFrameHeaderBytes || length > max_frame_)
      throw TransportError("channel: bad frame length");
    std::vector<std::uint8_t> buf(4 + length);
    std::memcpy(buf.data(), len_buf, 4);
    recv_exact(buf.data() + 4, length);
    std::string err;
    auto f = decode_frame(buf, &err, max_frame_);
    if (!f) throw TransportError("channel: " + err);
    return *f;
  }

  std::uint64_t bytes_sent() const { return bytes_sent_; }
  std::uint64_t frames_sent() const { return frames_sent_; }
  void reset_counters() {
    bytes_sent_ = 0;
    frames_sent_ = 0;
  }

  void set_max_frame(std::size_t bytes) { max_frame_ = bytes; }
  std::size_t max_frame() const { return max_frame_; }

 protected:
  virtual void send_bytes(const std::vector<std::uint8_t>& bytes) = 0;
  virtual void recv_exact(std::uint8_t* out, std::size_t count) = 0;

 private:
  std::uint64_t bytes_sent_ = 0;
  std::uint64_t frames_sent_ = 0;
  std::size_t max_frame_ = kDefaultMaxFrameBytes;
};

class MemoryChannel final : public Channel {
 protected:
  void send_bytes(const std::vector<std::uint8_t>& bytes) override {
    queue_.insert(queue_.end(), bytes.begin(), bytes.end());
  }

  void recv_exact(std::uint8_t* out, std::size_t count) override {
    if (queue_.size() < count) throw TransportError("memory channel: underrun");
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = queue_.front();
      queue_.pop_front();
    }
  }

 private:
  std::deque<std::uint8_t> queue_;
};

// Reliable stream-socket channel (AF_UNIX stream pair; same framing as any
// TCP-style byte stream). The secure-channel assumption of the system model
// is inherited: no encryption in transit. Both ends live in one process;
// when the kernel buffer fills mid-send the channel drains its own read end
// into a user-space buffer, so arbitrarily large frames stream through
// without a second thread.
class StreamChannel final : public Channel {
 public:
  StreamChannel() {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
      throw TransportError("stream channel: socketpair failed");
    write_fd_ = sv[0];
    read_fd_ = sv[1];
  }

  ~StreamChannel() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
  }

  StreamChannel(const StreamChannel&) = delete;
  StreamChannel& operator=(const StreamChannel&) = delete;

 protected:
  void send_bytes(const std::vector<std::uint8_t>& bytes) override {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      ssize_t n =
          ::send(write_fd_, bytes.data() + sent, bytes.size() - sent, MSG_DONTWAIT);
      if (n > 0) {
        sent += static_cast<std::size_t>(n);
        continue;
      }
      if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
        drain_socket();
        continue;
      }
      throw TransportError("stream channel: send failed");
    }
  }

  void recv_exact(std::uint8_t* out, std::size_t count) override {
    std::size_t got = 0;
    while (got < count && !rx_.empty()) {
      out[got++] = rx_.front();
      rx_.pop_front();
    }
    while (got < count) {
      ssize_t n = ::recv(read_fd_, out + got, count - got, MSG_DONTWAIT);
      if (n > 0) {
        got += static_cast<std::size_t>(n);
        continue;
      }
      // A single-threaded driver only receives data already in flight.
      throw TransportError("stream channel: recv on empty channel");
    }
  }

 private:
  void drain_socket() {
    std::uint8_t tmp[65536];
    ssize_t n = ::recv(read_fd_, tmp, sizeof tmp, MSG_DONTWAIT);
    if (n > 0) {
      rx_.insert(rx_.end(), tmp, tmp + n);
      return;
    }
    throw TransportError("stream channel: write stalled with nothing to drain");
  }

  int write_fd_ = -1;
  int read_fd_ = -1;
  std::deque<std::uint8_t> rx_;
};

enum class TransportKind { memory, socket };

inline std::unique_ptr<Channel> make_channel(TransportKind kind) {
  if (kind == TransportKind::socket) return std::make_unique<StreamChannel>();
  return std::make_unique<MemoryChannel>();
}

// Per-link byte totals for one experiment phase, from channel counters.
struct ByteAccounting {
  std::uint64_t clients_to_s0 = 0;
  std::uint64_t s0_to_s1 = 0;
  std::uint64_t s1_to_s0 = 0;
  std::uint64_t s0_to_clients = 0;
};

}  // namespace duofl::transport
