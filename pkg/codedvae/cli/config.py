# config file grammar
COMMENT_PREFIX = "#"
SECTIONS = ("model", "train", "data", "eval")
CHECKPOINT_NAME = "checkpoint.pt"
RUNLOG_NAME = "runlog.csv"
METRICS_JSON = "metrics.json"
METRICS_CSV = "metrics.csv"
GAP_JSON = "gap.json"
MESSAGES_NAME = "messages.txt"
# toy network of bounds-demo
DEMO_DATA_DIM = 8
DEMO_HIDDEN = 16
DEMO_ITEMS = 2000
