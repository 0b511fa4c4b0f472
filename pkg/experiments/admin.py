from django.contrib import admin
from .models import ExperimentRun, CheckResult


class CheckResultInline(admin.TabularInline):
    model = CheckResult
    extra = 0
    fields = ['tag', 'passed', 'measured']
    readonly_fields = ['tag', 'passed', 'measured']


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ['name', 'status', 'config_hash', 'master_seed', 'replicas', 'wall_time', 'created_at']
    list_filter = ['name', 'status']
    search_fields = ['name', 'config_hash', 'output_dir']
    readonly_fields = ['manifest', 'created_at']
    ordering = ['-created_at']
    inlines = [CheckResultInline]


@admin.register(CheckResult)
class CheckResultAdmin(admin.ModelAdmin):
    list_display = ['tag', 'run', 'passed']
    list_filter = ['passed', 'tag']
    search_fields = ['tag', 'run__name']
