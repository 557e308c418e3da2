#include "deblur_forge/eval.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <cstring>

extern char** environ;

namespace dforge {

std::u32string utf8_to_scalars(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min_cp = 0;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xe0) == 0xc0) {
      len = 2, cp = b0 & 0x1f, min_cp = 0x80;
    } else if ((b0 & 0xf0) == 0xe0) {
      len = 3, cp = b0 & 0x0f, min_cp = 0x800;
    } else if ((b0 & 0xf8) == 0xf0) {
      len = 4, cp = b0 & 0x07, min_cp = 0x10000;
    }
    bool ok = len != 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xc0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3f);
    }
    if (ok && (cp < min_cp || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff))) ok = false;
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(U'\uFFFD');
      ++i;
    }
  }
  return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8_to_scalars(a), utf8_to_scalars(b));
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

OcrScore ocr_score(std::string_view ground_truth, std::string_view recognized) {
  const std::u32string gt = utf8_to_scalars(normalize_whitespace(ground_truth));
  const std::u32string rec = utf8_to_scalars(normalize_whitespace(recognized));
  OcrScore s;
  s.distance = levenshtein(gt, rec);
  s.gt_len = gt.size();
  s.ocr_len = rec.size();
  const double denom = static_cast<double>(std::max({s.gt_len, s.ocr_len, std::size_t{1}}));
  s.score = 100.0 * (1.0 - static_cast<double>(s.distance) / denom);
  return s;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('\'');
  return out;
}

struct Fd {
  int fd = -1;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

}  // namespace

std::string run_ocr_command(const std::string& command, const std::filesystem::path& image,
                            std::chrono::milliseconds timeout) {
  std::string cmd = command;
  const std::string quoted = shell_quote(image.string());
  for (std::size_t pos = cmd.find("{input}"); pos != std::string::npos;
       pos = cmd.find("{input}", pos + quoted.size())) {
    cmd.replace(pos, 7, quoted);
  }

  std::array<Fd, 2> out_pipe;
  std::array<Fd, 2> err_pipe;
  int raw_out[2];
  int raw_err[2];
  if (::pipe(raw_out) != 0) throw OcrError(std::string("pipe failed: ") + std::strerror(errno));
  out_pipe[0].fd = raw_out[0];
  out_pipe[1].fd = raw_out[1];
  if (::pipe(raw_err) != 0) throw OcrError(std::string("pipe failed: ") + std::strerror(errno));
  err_pipe[0].fd = raw_err[0];
  err_pipe[1].fd = raw_err[1];

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1].fd, STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1].fd, STDERR_FILENO);
  posix_spawn_file_actions_addclose(&actions, out_pipe[0].fd);
  posix_spawn_file_actions_addclose(&actions, err_pipe[0].fd);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);

  const char* argv[] = {"/bin/sh", "-c", cmd.c_str(), nullptr};
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw OcrError(std::string("cannot start OCR command: ") + std::strerror(rc));
  out_pipe[1].reset();
  err_pipe[1].reset();

  std::string out_text;
  std::string err_text;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  bool timed_out = false;
  std::array<pollfd, 2> fds{{{out_pipe[0].fd, POLLIN, 0}, {err_pipe[0].fd, POLLIN, 0}}};
  std::array<std::string*, 2> sinks{&out_text, &err_text};
  int open_streams = 2;
  char buf[4096];
  while (open_streams > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) break;
    for (std::size_t k = 0; k < fds.size(); ++k) {
      if (fds[k].fd < 0 || fds[k].revents == 0) continue;
      const ssize_t n = ::read(fds[k].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[k]->append(buf, static_cast<std::size_t>(n));
      } else {
        fds[k].fd = -1;
        --open_streams;
      }
    }
  }
  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) {
    throw OcrError("OCR command timed out after " + std::to_string(timeout.count()) +
                   " ms; stderr: " + err_text);
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw OcrError("OCR command exited with status " + std::to_string(code) + "; stderr: " + err_text);
  }
  while (!out_text.empty() && std::isspace(static_cast<unsigned char>(out_text.back()))) {
    out_text.pop_back();
  }
  return out_text;
}

OcrResult run_external_ocr(const std::filesystem::path& image,
                           const std::optional<std::string>& command,
                           std::chrono::milliseconds timeout) {
  std::string cmd;
  if (command) {
    cmd = *command;
  } else if (const char* env = std::getenv(kOcrCommandEnv); env != nullptr) {
    cmd = env;
  }
  if (cmd.empty()) return {};
  return {true, run_ocr_command(cmd, image, timeout)};
}

}  // namespace dforge
