/* Minimal embedding example: build a synthetic dataset, train with the
 * rotation-augmented update, and read the alignment metric back.
 *
 * Build (from the workspace root, after `cargo build -p lae-ffi`):
 *   gcc crates/ffi/examples/demo.c -Icrates/ffi/include \
 *       -Ltarget/debug -llae_ffi -lm -lpthread -ldl -o demo
 */
#include <stdio.h>

#include "lae.h"

int main(void) {
    double sv[] = {3.0, 2.0, 1.0, 0.5, 0.25};
    LaeDataset *data = NULL;
    LaeTrainResult *result = NULL;
    LaeStatus status;

    status = lae_dataset_synthetic(5, 60, 3, 42, sv, 5, &data);
    if (status != LaeStatus_Ok) {
        fprintf(stderr, "dataset: %s\n", lae_last_error_message());
        return 1;
    }

    const char *run =
        "k = 2\n"
        "scheme = \"rag\"\n"
        "alpha = 0.05\n"
        "epochs = 800\n"
        "eval_every = 100\n"
        "seed = 0\n";
    status = lae_train_toml(data, run, &result);
    if (status != LaeStatus_Ok) {
        fprintf(stderr, "train: %s\n", lae_last_error_message());
        lae_dataset_free(data);
        return 1;
    }

    double align = 1.0;
    if (lae_result_alignment(result, data, &align) != LaeStatus_Ok) {
        fprintf(stderr, "alignment: %s\n", lae_last_error_message());
        return 1;
    }
    printf("rows=%zu diverged=%lld d_align=%.6f\n",
           lae_result_trace_len(result),
           (long long)lae_result_diverged_epoch(result), align);

    lae_result_free(result);
    lae_dataset_free(data);
    return align < 0.05 ? 0 : 2;
}
