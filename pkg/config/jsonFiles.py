import json
import os

JSON_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "jsonFiles")
TEMPLATE_DIR = os.path.join(JSON_DIR, "trussTemplates")

##Default run configuration
with open(os.path.join(JSON_DIR, "defaultRun.json"), "r") as file:
    DefaultRun = json.load(file)

##Truss-like outline templates, keyed by their versioned id
TrussTemplates = {}
for fileName in sorted(os.listdir(TEMPLATE_DIR)):
    if fileName.endswith(".json"):
        with open(os.path.join(TEMPLATE_DIR, fileName), "r") as file:
            template = json.load(file)
        TrussTemplates[template["id"]] = template
