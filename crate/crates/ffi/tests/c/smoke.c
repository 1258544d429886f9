/* Exercises the public header from C. argv[1] is a mock backend base URL. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "groundcue.h"

static int failures = 0;

#define CHECK(cond)                                                        \
  do {                                                                     \
    if (!(cond)) {                                                         \
      const char *e = gc_last_error();                                     \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,       \
              e ? e : "no error");                                         \
      failures++;                                                          \
    }                                                                      \
  } while (0)

int main(int argc, char **argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: smoke BASE_URL\n");
    return 2;
  }

  GcBox a = {0, 0, 3, 1}, b = {1, 0, 4, 1}, empty = {2, 2, 2, 2};
  double v = 0;
  CHECK(gc_iou(&a, &b, &v) == GC_STATUS_OK && v == 0.5);
  CHECK(gc_iou(&a, &empty, &v) == GC_STATUS_INVALID_ARGUMENT);
  CHECK(gc_last_error() != NULL);

  enum { W = 160, H = 120 };
  uint8_t *px = malloc(W * H * 3);
  for (int i = 0; i < W * H; i++) {
    px[3 * i] = 90;
    px[3 * i + 1] = 120;
    px[3 * i + 2] = 100;
  }
  GcImage *plain = NULL;
  CHECK(gc_image_new(W, H, px, W * H * 3, &plain) == GC_STATUS_OK);
  for (int y = 30; y < 90; y++)
    for (int x = 40; x < 100; x++)
      if (x < 43 || x >= 97 || y < 33 || y >= 87) {
        px[3 * (y * W + x)] = 255;
        px[3 * (y * W + x) + 1] = 0;
        px[3 * (y * W + x) + 2] = 0;
      }
  GcImage *img = NULL;
  CHECK(gc_image_new(W, H, px, W * H * 3, &img) == GC_STATUS_OK);
  free(px);
  CHECK(gc_image_width(img) == W && gc_image_height(img) == H);

  GcBox boxes[4];
  size_t n = 0;
  CHECK(gc_extract_cues(img, NULL, boxes, 4, &n) == GC_STATUS_OK && n == 1);
  CHECK(boxes[0].x_min == 40 && boxes[0].y_min == 30 && boxes[0].x_max == 100 && boxes[0].y_max == 90);

  GcEnhanceParams ep = gc_enhance_params_default();
  GcImage *enhanced = NULL;
  CHECK(gc_preprocess(img, &ep, &enhanced) == GC_STATUS_OK);
  size_t len = 0;
  CHECK(gc_image_data(enhanced, &len) != NULL && len == W * H * 3);

  GcBox truths[2] = {{0, 0, 100, 1}, {0, 0, 100, 1}};
  GcBox preds[2] = {{0, 0, 71, 1}, {0, 0, 20, 1}};
  double thr[2] = {0.5, 0.7}, acc[2], miou = 0;
  CHECK(gc_metrics(preds, NULL, truths, 2, thr, 2, &miou, acc) == GC_STATUS_OK);
  CHECK(miou > 0.4549 && miou < 0.4551 && acc[0] == 0.5 && acc[1] == 0.5);

  char toml[1024];
  snprintf(toml, sizeof toml,
           "[endpoints.editor]\nbase_url = \"%s\"\n"
           "[endpoints.segmenter_small]\nbase_url = \"%s\"\n"
           "[endpoints.segmenter_large]\nbase_url = \"%s\"\n"
           "[endpoints.rewriter]\nbase_url = \"%s\"\n",
           argv[1], argv[1], argv[1], argv[1]);
  GcPipeline *p = NULL;
  CHECK(gc_pipeline_new(toml, &p) == GC_STATUS_OK);
  GcGroundResult r;
  memset(&r, 0, sizeof r);
  CHECK(gc_pipeline_ground(p, "scene", plain, "the field", &r) == GC_STATUS_OK);
  CHECK(r.has_box && r.bbox.x_min == 12 && r.bbox.y_min == 16 && r.bbox.x_max == 52 && r.bbox.y_max == 46);
  CHECK(r.provenance == GC_PROVENANCE_REFINED_SMALL);
  CHECK(gc_pipeline_new("not = [valid", &p) == GC_STATUS_CONFIG);

  gc_pipeline_free(p);
  gc_image_free(enhanced);
  gc_image_free(img);
  gc_image_free(plain);
  printf("smoke %s: %d failures\n", gc_version(), failures);
  return failures == 0 ? 0 : 1;
}
