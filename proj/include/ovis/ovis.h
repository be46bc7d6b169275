// Copyright 2026 The Ovis Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OVIS_OVIS_H_
#define OVIS_OVIS_H_

#include <stddef.h>

#if defined(OVIS_BUILDING_LIBRARY)
#define OVIS_API __attribute__((visibility("default")))
#else
#define OVIS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define OVIS_VERSION "0.1.0"

typedef enum ovis_status {
  OVIS_OK = 0,
  OVIS_ERR_ARGUMENT = 1,  /* null handle or pointer */
  OVIS_ERR_REQUEST = 2,   /* malformed request document; message names the field */
  OVIS_ERR_DIMENSION = 3,
  OVIS_ERR_CONTRACT = 4,
  OVIS_ERR_DOMAIN = 5,
  OVIS_ERR_FORMAT = 6,
  OVIS_ERR_DATA = 7,
  OVIS_ERR_IO = 8,
  OVIS_ERR_INTERNAL = 9
} ovis_status;

typedef struct ovis_scene ovis_scene;
typedef struct ovis_model ovis_model;

OVIS_API const char* ovis_version(void);
OVIS_API const char* ovis_status_name(ovis_status status);

/* Message of the last failed call on the calling thread; "" after success. */
OVIS_API const char* ovis_last_error(void);

/* Releases strings and buffers returned through out-parameters. */
OVIS_API void ovis_string_free(char* text);
OVIS_API void ovis_buffer_free(void* data);

/* Writes one bundle directory per generated scene under out_dir.
 * ids_json (optional) receives a JSON array of the scene ids. */
OVIS_API ovis_status ovis_fixtures_generate(const char* spec_json, const char* out_dir, char** ids_json);

OVIS_API ovis_status ovis_scene_load(const char* dir, ovis_scene** out);
OVIS_API void ovis_scene_free(ovis_scene* scene);
/* Borrowed; valid while the scene lives. */
OVIS_API const char* ovis_scene_id(const ovis_scene* scene);
OVIS_API size_t ovis_scene_num_points(const ovis_scene* scene);

/* Little-endian payload: uint32 point count M, then M records of six
 * float32 values x y z r g b. Exactly 4 + 24 M bytes. */
OVIS_API ovis_status ovis_scene_points(const ovis_scene* scene, unsigned char** data, size_t* size);

/* Trains a fresh model from a training config document and saves it to
 * out_dir. history_csv may be null. summary_json (optional) receives
 * {"steps", "initial_loss", "final_loss"}. */
OVIS_API ovis_status ovis_train(const char* config_json, const char* const* scene_dirs, size_t num_scenes,
                                const char* out_dir, const char* history_csv, char** summary_json);

OVIS_API ovis_status ovis_model_load(const char* dir, ovis_model** out);
OVIS_API void ovis_model_free(ovis_model* model);
OVIS_API ovis_status ovis_model_config(const ovis_model* model, char** config_json);

/* request: {"text": string, "top_k"?: int >= 0, "tau"?: [0.5, 1],
 *           "mode"?: "none" | "hard" | "soft"}; a "scene_id" field is ignored.
 * response: {"text", "mode", "tau", "results": [{"mask_id", "query",
 *            "fragment", "score", "point_indices"}]}.
 * Safe to call concurrently on the same handles. */
OVIS_API ovis_status ovis_query(const ovis_model* model, const ovis_scene* scene, const char* request_json,
                                char** response_json);

/* options (may be null): {"tau"?, "mode"?, "nms_iou"?, "grounding"?: bool,
 *                        "curves_path"?: precision-recall CSV destination}.
 * Category-name classification over every scene, plus caption grounding
 * unless disabled. */
OVIS_API ovis_status ovis_evaluate(const ovis_model* model, const ovis_scene* const* scenes, size_t num_scenes,
                                   const char* options_json, char** report_json);

/* Answers the query and writes an ASCII PLY with the returned instances
 * tinted by rank. */
OVIS_API ovis_status ovis_export_ply(const ovis_model* model, const ovis_scene* scene, const char* request_json,
                                     const char* path);

#ifdef __cplusplus
}
#endif

#endif
