from django.contrib import admin

from lab.models import Experiment, Run


class RunInline(admin.TabularInline):
    model = Run
    extra = 0


@admin.register(Experiment)
class ExperimentAdmin(admin.ModelAdmin):
    inlines = (RunInline,)
    list_display = ('experiment_id', 'command', 'status', 'created_at')
    list_filter = ('command', 'status')


admin.site.register(Run)
