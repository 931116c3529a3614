// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
// <resolv.h>, pulled in by httplib, defines `_res` as a macro; Eigen uses
// that name for function parameters.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "rmot/annotator.hpp"
#include "rmot/data_model.hpp"
#include "rmot/error.hpp"

namespace rmot::service {

/// Writes `body` to a sibling temp file, syncs it, then renames it over
/// `path`. A crash at any point leaves either the old or the new file.
inline void atomic_write(const std::filesystem::path& path, const std::string& body) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  auto fail = [&](const std::string& what) {
    const std::string reason = std::strerror(errno);
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw Error(ErrorCode::io, what + " " + tmp.string() + ": " + reason, path.string());
  };
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail("cannot create");
  std::size_t done = 0;
  while (done < body.size()) {
    const ssize_t n = ::write(fd, body.data() + done, body.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      fail("cannot write");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    fail("cannot sync");
  }
  if (::close(fd) != 0) fail("cannot close");
  if (::rename(tmp.c_str(), path.c_str()) != 0) fail("cannot rename");
}

using Writer = std::function<void(const std::filesystem::path&, const std::string&)>;

struct Snapshot {
  std::shared_ptr<const SequenceAnnotation> annotation;
  std::uint64_t revision = 0;
};

/**
 * Annotations of one dataset directory, keyed by sequence id. Readers take an
 * immutable snapshot; writers of one sequence are serialized and replace the
 * snapshot only after the file on disk has been replaced.
 */
class LabelStore {
 public:
  explicit LabelStore(const std::filesystem::path& root, Writer writer = atomic_write)
      : writer_(std::move(writer)) {
    for (const auto& file : annotation_files(root)) {
      auto ann = std::make_shared<const SequenceAnnotation>(load_annotation(file));
      const std::string id = ann->sequence_id;
      auto entry = std::make_unique<Entry>();
      entry->file = file;
      entry->snapshot = {std::move(ann), 0};
      if (!entries_.emplace(id, std::move(entry)).second) {
        throw Error(ErrorCode::validation, "sequence '" + id + "' defined twice", file.string());
      }
    }
  }

  std::vector<std::string> sequence_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, e] : entries_) ids.push_back(id);
    return ids;
  }

  Snapshot snapshot(const std::string& sequence_id) const {
    const Entry& e = entry(sequence_id);
    std::lock_guard lock(e.swap_mutex);
    return e.snapshot;
  }

  /// Applies `edit` to the current annotation. `expected_revision`, when
  /// given, must equal the current revision.
  Snapshot mutate(const std::string& sequence_id, std::optional<std::uint64_t> expected_revision,
                  const std::function<SequenceAnnotation(const SequenceAnnotation&)>& edit) {
    Entry& e = entry(sequence_id);
    std::lock_guard writer_lock(e.write_mutex);
    const Snapshot current = snapshot(sequence_id);
    if (expected_revision && *expected_revision != current.revision) {
      throw Error(ErrorCode::conflict,
                  "revision " + std::to_string(*expected_revision) + " is stale; current is " +
                      std::to_string(current.revision),
                  "revision");
    }
    auto next = std::make_shared<const SequenceAnnotation>(edit(*current.annotation));
    validate(*next);
    writer_(e.file, dump_annotation(*next));
    std::lock_guard swap_lock(e.swap_mutex);
    e.snapshot = {std::move(next), current.revision + 1};
    return e.snapshot;
  }

 private:
  struct Entry {
    std::filesystem::path file;
    Snapshot snapshot;
    std::mutex write_mutex;
    mutable std::mutex swap_mutex;  // guards the snapshot pointer only
  };

  Entry& entry(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
      throw Error(ErrorCode::not_found, "unknown sequence '" + id + "'", "sequence_id");
    }
    return *it->second;
  }

  Writer writer_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse:
    case ErrorCode::invalid_argument:
    case ErrorCode::dimension_mismatch: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::validation:
    case ErrorCode::click_rejected:
    case ErrorCode::no_op:
    case ErrorCode::out_of_range: return 422;
    case ErrorCode::io: return 500;
  }
  return 500;
}

inline nlohmann::ordered_json error_body(const Error& e) {
  nlohmann::ordered_json j{{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
  if (!e.field().empty()) j["field"] = e.field();
  return j;
}

inline nlohmann::ordered_json referents_json(const Expression& expr) {
  auto refs = nlohmann::ordered_json::array();
  for (const auto& r : expr.referents)
    refs.push_back({{"object_id", r.object_id}, {"start", r.start}, {"end", r.end}});
  return refs;
}

inline nlohmann::ordered_json sequence_summary(const Snapshot& snap) {
  const auto& ann = *snap.annotation;
  auto exprs = nlohmann::ordered_json::array();
  for (const auto& e : ann.expressions) {
    exprs.push_back({{"expression_id", e.id}, {"text", e.text}, {"referents", referents_json(e)}});
  }
  return {{"sequence_id", ann.sequence_id}, {"frame_count", ann.frame_count},
          {"frame_w", ann.frame_w},         {"frame_h", ann.frame_h},
          {"revision", snap.revision},      {"expressions", std::move(exprs)}};
}

/// Boxes visible at `frame` and, per expression, the referent objects there.
inline nlohmann::ordered_json frame_view(const Snapshot& snap, int frame) {
  const auto& ann = *snap.annotation;
  if (frame < 0 || frame >= ann.frame_count) {
    throw Error(ErrorCode::not_found,
                "frame " + std::to_string(frame) + " outside sequence '" + ann.sequence_id + "'",
                "frame");
  }
  std::map<int, std::vector<int>> referent_of;  // object id -> expression ids
  auto referents = nlohmann::ordered_json::array();
  for (const auto& e : ann.expressions) {
    const ReferentMap rf = referent_frames(ann, e.id);
    std::vector<int> ids;
    if (auto it = rf.find(frame); it != rf.end()) ids.assign(it->second.begin(), it->second.end());
    for (int id : ids) referent_of[id].push_back(e.id);
    referents.push_back({{"expression_id", e.id}, {"object_ids", ids}});
  }
  auto boxes = nlohmann::ordered_json::array();
  for (const auto& obj : ann.objects) {
    auto it = obj.boxes.find(frame);
    if (it == obj.boxes.end()) continue;
    const Box& b = it->second;
    boxes.push_back({{"object_id", obj.id},
                     {"box", {b.x1(), b.y1(), b.x2(), b.y2()}},
                     {"category", obj.category},
                     {"referent_expressions", referent_of[obj.id]}});
  }
  return {{"sequence_id", ann.sequence_id},
          {"frame", frame},
          {"revision", snap.revision},
          {"boxes", std::move(boxes)},
          {"referents", std::move(referents)}};
}

namespace detail {

inline nlohmann::json request_json(const httplib::Request& req) {
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::parse, "request body must be a JSON object", "body");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("malformed JSON body: ") + e.what(), "body");
  }
}

inline std::optional<std::uint64_t> request_revision(const nlohmann::json& body) {
  if (!body.contains("revision") || body.at("revision").is_null()) return std::nullopt;
  return rmot::detail::json_field<std::uint64_t>(body, "revision", "");
}

}  // namespace detail

/// HTTP front end over a LabelStore. Every response body is JSON.
class LabelService {
 public:
  explicit LabelService(const std::filesystem::path& root, Writer writer = atomic_write)
      : store_(root, std::move(writer)) {
    // SO_REUSEADDR only: a port held by another listener must fail to bind.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
  }

  LabelStore& store() { return store_; }

  /// Binds to `host:port`; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host)
                                : (server_.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) {
      throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port), "port");
    }
    return bound;
  }

  /// Blocks until stop() is called.
  void serve() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  using Handler = std::function<std::pair<int, nlohmann::ordered_json>(const httplib::Request&)>;

  static void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        auto [status, body] = h(req);
        reply(res, status, body);
      } catch (const Error& e) {
        reply(res, http_status(e.code()), error_body(e));
      } catch (const std::exception& e) {
        reply(res, 500, {{"code", "internal_error"}, {"message", e.what()}});
      }
    };
  }

  static int path_int(const httplib::Request& req, std::size_t group, const char* field) {
    try {
      return rmot::detail::parse_int(req.matches[group].str(), field);
    } catch (const Error&) {
      throw Error(ErrorCode::not_found, std::string("bad ") + field + " in path", field);
    }
  }

  void routes() {
    server_.Get("/sequences", wrap([this](const httplib::Request&) {
      auto list = nlohmann::ordered_json::array();
      for (const auto& id : store_.sequence_ids()) list.push_back(sequence_summary(store_.snapshot(id)));
      return std::pair{200, list};
    }));

    server_.Get(R"(/sequences/([^/]+)/frames/(-?\d+))", wrap([this](const httplib::Request& req) {
      const auto snap = store_.snapshot(req.matches[1].str());
      return std::pair{200, frame_view(snap, path_int(req, 2, "frame"))};
    }));

    server_.Post(R"(/sequences/([^/]+)/expressions)", wrap([this](const httplib::Request& req) {
      const auto body = detail::request_json(req);
      const auto text = rmot::detail::json_field<std::string>(body, "text", "");
      int created = -1;
      const auto snap = store_.mutate(req.matches[1].str(), detail::request_revision(body),
                                      [&](const SequenceAnnotation& ann) {
                                        auto [next, id] = create_expression(ann, text);
                                        created = id;
                                        return next;
                                      });
      return std::pair{201, nlohmann::ordered_json{{"expression_id", created},
                                                   {"revision", snap.revision}}};
    }));

    server_.Post(R"(/sequences/([^/]+)/clicks)", wrap([this](const httplib::Request& req) {
      const auto body = detail::request_json(req);
      using rmot::detail::json_field;
      const ClickPair click{json_field<int>(body, "expression_id", ""),
                            json_field<int>(body, "object_id", ""),
                            json_field<int>(body, "start", ""), json_field<int>(body, "end", "")};
      const auto snap = store_.mutate(
          req.matches[1].str(), detail::request_revision(body),
          [&](const SequenceAnnotation& ann) { return propagate(ann, click); });
      return std::pair{200, updated(snap, click.expression_id)};
    }));

    server_.Delete(R"(/sequences/([^/]+)/expressions/(-?\d+)/referents)",
                   wrap([this](const httplib::Request& req) {
                     const auto body = detail::request_json(req);
                     using rmot::detail::json_field;
                     const int eid = path_int(req, 2, "expression_id");
                     const int oid = json_field<int>(body, "object_id", "");
                     const int frame = json_field<int>(body, "frame", "");
                     const auto snap = store_.mutate(
                         req.matches[1].str(), detail::request_revision(body),
                         [&](const SequenceAnnotation& ann) { return retract(ann, eid, oid, frame); });
                     return std::pair{200, updated(snap, eid)};
                   }));

    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      reply(res, res.status,
            {{"code", res.status == 404 ? "not_found" : "http_error"},
             {"message", "HTTP " + std::to_string(res.status)}});
    });
  }

  static nlohmann::ordered_json updated(const Snapshot& snap, int expression_id) {
    return {{"expression_id", expression_id},
            {"referents", referents_json(snap.annotation->expression(expression_id))},
            {"revision", snap.revision}};
  }

  LabelStore store_;
  httplib::Server server_;
};

}  // namespace rmot::service
