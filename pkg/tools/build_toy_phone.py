"""Regenerates src/guire/data/toy_phone.json, the bundled navigation suite."""

import json
from pathlib import Path

W, H = 1080, 1920
screens = []
transitions = []


def title(text):
    return {"id": "title", "bbox": [0, 0, W, 160], "role": "label", "label": text, "z_order": 0}


def item(i, eid, label, role="button"):
    y = 200 + i * 180
    return {"id": eid, "bbox": [40, y, 1040, y + 150], "role": role, "label": label, "z_order": 1}


def icon(i, eid, label):
    col, row = i % 4, i // 4
    x, y = col * 270, 300 + row * 300
    return {"id": eid, "bbox": [x + 30, y + 30, x + 240, y + 240], "role": "icon", "label": label, "z_order": 1}


def screen(sid, name, elements, parent=None):
    screens.append({"id": sid, "title": name, "elements": [title(name)] + elements})
    if parent:
        transitions.append({"screen": sid, "action": "navigate_back", "target": parent})


def tap(sid, eid, target, set_fields=None, action="tap"):
    t = {"screen": sid, "element": eid, "action": action, "target": target}
    if set_fields:
        t["set"] = set_fields
    transitions.append(t)


APPS = [("contacts", "Contacts", "contacts_list"), ("settings", "Settings", "settings_main"),
        ("notes", "Notes", "notes_list"), ("clock", "Clock", "clock_main"),
        ("gallery", "Gallery", "gallery_grid")]
DRAWER = [("files", "Files", "files_root"), ("calculator", "Calculator", "calculator")]

screen("home", "Home", [icon(i, f"{a}_icon", label) for i, (a, label, _) in enumerate(APPS)])
for a, label, target in APPS:
    tap("home", f"{a}_icon", target)
transitions.append({"screen": "home", "action": "swipe", "param": "up", "target": "app_drawer"})
screen("app_drawer", "All apps", [icon(i, f"{a}_icon", label) for i, (a, label, _) in enumerate(DRAWER)], "home")
for a, label, target in DRAWER:
    tap("app_drawer", f"{a}_icon", target)
transitions.append({"screen": "app_drawer", "action": "swipe", "param": "down", "target": "home"})
for _, label, target in APPS + DRAWER:
    transitions.append({"screen": "*", "action": "open_app", "param": label, "target": target})
transitions.append({"screen": "*", "action": "navigate_home", "target": "home"})

# Contacts
screen("contacts_list", "Contacts", [item(0, "search_field", "Search contacts", "textfield"),
                                     item(1, "add_contact", "Add contact"),
                                     item(2, "contact_alex", "Alex")], "home")
tap("contacts_list", "add_contact", "contact_editor")
tap("contacts_list", "contact_alex", "contact_alex_card")
transitions.append({"screen": "contacts_list", "action": "press_enter", "target": "contact_search"})
screen("contact_search", "Search results", [item(0, "result_alex", "Alex")], "contacts_list")
tap("contact_search", "result_alex", "contact_alex_card")
screen("contact_editor", "New contact", [item(0, "name_field", "Name", "textfield"),
                                         item(1, "phone_field", "Phone", "textfield"),
                                         item(2, "save_contact", "Save")], "contacts_list")
tap("contact_editor", "save_contact", "contact_saved")
screen("contact_saved", "Contact saved", [item(0, "saved_ok", "Done")], "contacts_list")
tap("contact_saved", "saved_ok", "contacts_list")
screen("contact_alex_card", "Alex", [item(0, "call_alex", "Call"), item(1, "message_alex", "Message")],
       "contacts_list")
tap("contact_alex_card", "call_alex", "call_screen")
screen("call_screen", "Calling Alex", [item(0, "hang_up", "Hang up")], "contact_alex_card")
tap("call_screen", "hang_up", "contact_alex_card")

# Settings
screen("settings_main", "Settings", [item(0, "network", "Network & internet"), item(1, "display", "Display"),
                                     item(2, "sound", "Sound")], "home")
tap("settings_main", "network", "settings_network")
tap("settings_main", "display", "settings_display")
tap("settings_main", "sound", "settings_sound")
screen("settings_network", "Network & internet", [item(0, "wifi", "Wi-Fi"), item(1, "bluetooth", "Bluetooth")],
       "settings_main")
tap("settings_network", "wifi", "wifi")
tap("settings_network", "bluetooth", "bluetooth")
screen("wifi", "Wi-Fi", [item(0, "wifi_switch", "Use Wi-Fi", "switch"), item(1, "wifi_advanced", "Advanced")],
       "settings_network")
tap("wifi", "wifi_switch", "wifi", {"wifi": "on"})
tap("wifi", "wifi_advanced", "wifi_advanced")
screen("wifi_advanced", "Advanced Wi-Fi", [item(0, "private_dns", "Private DNS")], "wifi")
tap("wifi_advanced", "private_dns", "private_dns")
screen("private_dns", "Private DNS", [item(0, "dns_host", "Hostname", "textfield"), item(1, "dns_save", "Save")],
       "wifi_advanced")
tap("private_dns", "dns_save", "wifi_advanced")
screen("bluetooth", "Bluetooth", [item(0, "bt_pair", "Pair new device")], "settings_network")
tap("bluetooth", "bt_pair", "bt_pairing")
screen("bt_pairing", "Pair new device", [item(0, "bt_scan", "Scanning")], "bluetooth")
screen("settings_display", "Display", [item(0, "brightness", "Brightness"), item(1, "theme", "Theme")],
       "settings_main")
tap("settings_display", "theme", "display_theme")
tap("settings_display", "brightness", "brightness")
screen("brightness", "Brightness", [item(0, "brightness_auto", "Adaptive brightness", "switch")], "settings_display")
tap("brightness", "brightness_auto", "brightness", {"adaptive_brightness": "on"})
screen("display_theme", "Theme", [item(0, "dark_theme", "Dark theme", "switch"), item(1, "light_theme", "Light theme", "switch")],
       "settings_display")
tap("display_theme", "dark_theme", "display_theme", {"theme": "dark"})
tap("display_theme", "light_theme", "display_theme", {"theme": "light"})
screen("settings_sound", "Sound", [item(0, "mute", "Mute", "switch")], "settings_main")
tap("settings_sound", "mute", "settings_sound", {"mute": "on"})

# Notes
screen("notes_list", "Notes", [item(0, "new_note", "New note")], "home")
tap("notes_list", "new_note", "note_editor")
screen("note_editor", "Note", [item(0, "note_title", "Title", "textfield"), item(1, "note_body", "Body", "textfield"),
                               item(2, "note_save", "Save note")], "notes_list")
tap("note_editor", "note_save", "note_saved")
screen("note_saved", "Note saved", [item(0, "note_done", "Done")], "notes_list")
tap("note_saved", "note_done", "notes_list")

# Clock
screen("clock_main", "Clock", [item(0, "alarm_tab", "Alarm"), item(1, "timer_tab", "Timer")], "home")
tap("clock_main", "alarm_tab", "clock_alarms")
tap("clock_main", "timer_tab", "clock_timer")
screen("clock_timer", "Timer", [item(0, "timer_start", "Start")], "clock_main")
screen("clock_alarms", "Alarms", [item(0, "add_alarm", "Add alarm")], "clock_main")
tap("clock_alarms", "add_alarm", "alarm_editor")
screen("alarm_editor", "New alarm", [item(0, "preset_700", "7:00"), item(1, "preset_730", "7:30"),
                                     item(2, "alarm_label", "Label", "textfield"), item(3, "alarm_save", "Save alarm")],
       "clock_alarms")
tap("alarm_editor", "preset_700", "alarm_editor", {"alarm_time": "7:00"})
tap("alarm_editor", "preset_730", "alarm_editor", {"alarm_time": "7:30"})
tap("alarm_editor", "alarm_save", "alarm_saved")
screen("alarm_saved", "Alarm saved", [item(0, "alarm_done", "Done")], "clock_alarms")

# Gallery
screen("gallery_grid", "Gallery", [item(0, "albums_tab", "Albums"), item(1, "photos_tab", "Photos")], "home")
tap("gallery_grid", "albums_tab", "gallery_albums")
screen("gallery_albums", "Albums", [item(0, "camera_album", "Camera")], "gallery_grid")

# Files
screen("files_root", "Files", [item(0, "downloads", "Downloads"), item(1, "documents", "Documents")], "home")
tap("files_root", "downloads", "files_downloads")
tap("files_root", "documents", "files_documents")
screen("files_documents", "Documents", [], "files_root")
screen("files_downloads", "Downloads", [item(0, "downloads_more", "More options")], "files_root")
tap("files_downloads", "downloads_more", "downloads_menu")
screen("downloads_menu", "Folder options", [item(0, "rename_folder", "Rename")], "files_downloads")
tap("downloads_menu", "rename_folder", "rename_dialog")
screen("rename_dialog", "Rename folder", [item(0, "folder_name", "Folder name", "textfield"),
                                          item(1, "rename_ok", "OK")], "downloads_menu")
tap("rename_dialog", "rename_ok", "folder_renamed")
screen("folder_renamed", "Folder renamed", [item(0, "rename_done", "Done")], "files_root")
screen("calculator", "Calculator", [item(0, "calc_display", "0", "label")], "app_drawer")


def task(tid, goal, difficulty, screen_id, fields=None):
    s = {"screen": screen_id, "terminated": True}
    if fields:
        s["fields"] = fields
    return {"id": tid, "goal": goal, "initial_screen": "home", "difficulty": difficulty, "success": s}


tasks = [
    task("net_settings", "Open network settings", 1, "settings_network"),
    task("contact_editor", "Open the new contact form", 1, "contact_editor"),
    task("display_settings", "Open display settings", 1, "settings_display"),
    task("alex_card", "Open the contact card of Alex", 1, "contact_alex_card"),
    task("new_note", "Start a new note", 1, "note_editor"),
    task("alarms", "Show my alarms", 1, "clock_alarms"),
    task("downloads", "Open the Downloads folder", 1, "files_downloads"),
    task("albums", "Show the photo albums", 1, "gallery_albums"),
    task("wifi_advanced", "Open advanced Wi-Fi settings", 2, "wifi_advanced"),
    task("wifi_on", "Turn on Wi-Fi", 2, "wifi", {"wifi": "on"}),
    task("dark_theme", "Turn on dark theme", 2, "display_theme", {"theme": "dark"}),
    task("note_hello", "Write a note saying hello", 2, "note_editor", {"note_body": "hello"}),
    task("alarm_700", "Pick 7:00 for a new alarm", 2, "alarm_editor", {"alarm_time": "7:00"}),
    task("bt_pair", "Pair a new Bluetooth device", 2, "bt_pairing"),
    task("search_alex", "Search contacts for Alex", 2, "contact_search", {"search_field": "Alex"}),
    task("contact_lina", "Create contact Lina with phone 555", 3, "contact_saved",
         {"name_field": "Lina", "phone_field": "555"}),
    task("private_dns", "Set the private DNS hostname to dns.example", 3, "private_dns",
         {"dns_host": "dns.example"}),
    task("note_groceries", "Save a note titled Groceries with body milk", 3, "note_saved",
         {"note_title": "Groceries", "note_body": "milk"}),
    task("alarm_gym", "Save a 7:30 alarm labelled Gym", 3, "alarm_saved",
         {"alarm_time": "7:30", "alarm_label": "Gym"}),
    task("rename_downloads", "Rename the Downloads folder to Old", 3, "folder_renamed", {"folder_name": "Old"}),
]

env = {
    "schema_version": "env.v1",
    "name": "toy_phone",
    "platform": "mobile",
    "dims": [W, H],
    "initial_screen": "home",
    "screens": screens,
    "transitions": transitions,
    "tasks": tasks,
}
out = Path(__file__).resolve().parents[1] / "src" / "guire" / "data" / "toy_phone.json"
out.write_text(json.dumps(env, indent=1) + "\n")
print(f"wrote {out} ({len(screens)} screens, {len(transitions)} transitions, {len(tasks)} tasks)")
